import math

import numpy as np
import pytest

from hybrid_pmsm.analysis import (
    W1,
    check_flow_decrease,
    check_jump_decrease,
    fit_decay_rate,
    jump_deltas,
    matrosov_eval,
    semiglobal_sweep,
    sigma_s,
    sigma_s_array,
    time_to_threshold,
)
from hybrid_pmsm.cosim import CoSim
from hybrid_pmsm.hybrid import JumpRecord, simulate
from hybrid_pmsm.observers import chi_inputs, reduced_flow, reduced_hybrid_system, reduced_system

NAMES = ("eta1", "eta2", "xi_t", "rho")


def test_matrosov_examples():
    m = matrosov_eval((-1.0, 0.0), 0.0, 0.0, 1.0, 1.0)
    assert m.W1 == 2.0 and m.W4 == 2.0 and m.W2 == 0.0 and m.W3 == 0.0
    assert matrosov_eval((0.0, 1.0), 1.0, 1.0, 1.0, 1.0).W3 == pytest.approx(2.0 * math.e)
    assert matrosov_eval((0.6, 0.8), 2.0, 0.0, 3.0, 1.0).W2 == pytest.approx(-3.0 * 2.0 * 0.48)
    assert W1(1.0, 2.0, 4.0) == pytest.approx(0.5)


def test_W1_rate_at_quarter_turn():
    deta, dxi = reduced_flow((0.0, 1.0), 0.0, 1.0, 1.5, 1.0)
    assert -deta[0] + 0.0 * dxi == pytest.approx(-1.5)


def test_jump_delta_examples():
    def rec(pre):
        pre = np.array(pre)
        post = pre.copy()
        post[0] = abs(pre[0])
        post[3] = 0.0
        return JumpRecord(1.0, 0, pre, post)

    assert jump_deltas(rec([-0.6, 0.8, 0.0, 1.0]), NAMES, 1.0)[0] == pytest.approx(-1.2)
    assert jump_deltas(rec([0.6, 0.8, 0.0, 1.0]), NAMES, 1.0)[0] == 0.0
    assert jump_deltas(rec([1.0, 0.0, 1.0, 1.0]), NAMES, 1.0)[1] == pytest.approx(1.0 - math.e)
    assert check_jump_decrease([rec([-0.6, 0.8, 0.3, 1.0])], NAMES, 1.0).passed
    bad = rec([-0.6, 0.8, 0.3, 0.99])
    assert not check_jump_decrease([bad], NAMES, 1.0).passed


def test_sigma_examples():
    assert sigma_s((1.0, 0.0), 0.0) == 0.0
    assert sigma_s((-1.0, 0.0), 0.0) == 2.0
    assert sigma_s((0.0, 1.0), 0.0, rho=0.7) == pytest.approx(math.sqrt(2.0))
    assert np.allclose(sigma_s_array([1, -1], [0, 0], [0, 0]), [0, 2])


def test_reduced_arcs_pass_both_checks():
    x0 = [math.cos(2.5), math.sin(2.5), 1.0, 0.0]
    arc = simulate(reduced_hybrid_system(1.5, 1.0, 1.0), x0, chi_inputs(1.0), 10.0, 0.005)
    flow = check_flow_decrease(arc, 1.5, 1.0, lambda t: 1.0)
    assert flow.passed and flow.checked > 1000 and flow.details["max_dW1"] <= 1e-9
    jumps = check_jump_decrease(arc.jumps, arc.names, 1.0)
    assert jumps.passed and jumps.checked == 10


def test_flow_check_detects_wrong_gain():
    arc = simulate(reduced_system(1.5, 1.0), [0.0, 1.0, 0.5], chi_inputs(1.0), 5.0, 0.005)
    assert check_flow_decrease(arc, 1.5, 1.0, lambda t: 1.0).passed
    assert not check_flow_decrease(arc, 1.0, 1.0, lambda t: 1.0).passed


def test_time_to_threshold():
    t = np.arange(6.0)
    assert time_to_threshold(t, np.array([5, 1, 0.5, 2, 0.1, 0.0]), 1.0) == 4.0
    assert time_to_threshold(t, np.zeros(6), 1.0) == 0.0
    assert time_to_threshold(t, np.array([0, 0, 0, 0, 0, 3.0]), 1.0) == math.inf


def test_fit_decay_rate():
    t = np.linspace(0, 2, 50)
    assert fit_decay_rate(t, 4.0 * np.exp(-3.0 * t)) == pytest.approx(3.0)
    y = np.exp(-3.0 * t)
    y[30:] = 0.0
    assert fit_decay_rate(t, y, floor=1e-300) == pytest.approx(3.0)


def test_sweep_trivial_start_passes():
    base = CoSim(variant="hybrid")
    eps0 = base.gains.epsilon(base.params)
    res = semiglobal_sweep(base, lambda cs: [cs.initial_state(rotor_angle=0.5)], [eps0, eps0 / 2],
                           delta_fast=1e-2, delta_slow=0.05, horizon=2e-3)
    assert res.passed and res.eps_star == pytest.approx(eps0 / 2)
    assert [r.runs for r in res.rows] == [1, 1]
    with pytest.raises(ValueError):
        semiglobal_sweep(base, lambda cs: [cs.initial_state(rho=0.5)], [eps0], 1e-3, 0.05, 1e-3)
