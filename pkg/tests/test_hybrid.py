import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_pmsm.hybrid import (
    BISECTION_REL_TOL,
    DivergenceError,
    DomainError,
    HybridSystem,
    ZenoError,
    arc_query,
    clock_system,
    Clock,
    simulate,
    write_arc_csv,
)
from hybrid_pmsm.observers import chi_inputs, reduced_hybrid_system

A_TEST = np.array([[-0.1, 1.0], [-1.0, -0.1]])


def spiral():
    return HybridSystem(flow=lambda t, x, u: A_TEST @ x, jump=lambda t, x, u: x,
                        guard=lambda x: False, names=("a", "b"))


def spiral_exact(t, x0):
    c, s = math.cos(t), math.sin(t)
    return math.exp(-0.1 * t) * np.array([[c, s], [-s, c]]) @ x0


def measured_order(steps, horizon=2.0):
    x0 = np.array([1.0, 0.5])
    exact = spiral_exact(horizon, x0)
    errs = [np.linalg.norm(simulate(spiral(), x0, None, horizon, h).final_state - exact) for h in steps]
    return [math.log2(errs[k] / errs[k + 1]) for k in range(len(errs) - 1)], errs


def test_rk4_order():
    orders, _ = measured_order([0.2, 0.1, 0.05, 0.025])
    assert min(orders) >= 3.5


def test_constant_system_single_segment():
    sys = HybridSystem(flow=lambda t, x, u: np.zeros(2), jump=lambda t, x, u: x,
                       guard=lambda x: False, names=("p", "q"))
    arc = simulate(sys, [1.0, 2.0], None, 0.5, 0.1)
    assert len(arc.segments) == 1 and arc.j_final == 0
    assert np.all(arc.states() == [1.0, 2.0])
    assert arc.t_final == pytest.approx(0.5)


def test_clock_jumps_every_period():
    arc = simulate(clock_system(200.0), [0.0], None, 0.02, 1e-6)
    times = [r.t for r in arc.jumps]
    assert [r.j for r in arc.jumps] == [0, 1, 2, 3]
    assert np.allclose(times, [0.005, 0.010, 0.015, 0.020], atol=2e-12)
    assert arc.j_final == 4


def test_clock_period_with_coarse_step():
    # the events fall strictly inside steps
    step = 7e-4
    arc = simulate(clock_system(200.0), [0.0], None, 0.05, step)
    tol = step * BISECTION_REL_TOL
    for k, r in enumerate(arc.jumps, 1):
        # each period is exact up to one location tolerance
        assert abs(r.t - k / 200.0) <= k * tol + 1e-15
    # grid stays aligned after an interrupted step
    flow_t = arc.segment(1).t
    inner = flow_t[(flow_t > arc.jumps[0].t) & (flow_t < arc.jumps[1].t)]
    assert np.allclose(inner / step, np.round(inner / step))


def test_clock_dataclass():
    assert Clock(200.0).period == pytest.approx(0.005)
    with pytest.raises(ValueError):
        Clock(0.0)
    with pytest.raises(ValueError):
        Clock(1.0, rho=1.5)


def test_arc_invariants():
    arc = simulate(clock_system(200.0), [0.3], None, 0.03, 1e-4, record_every=7)
    t, j = arc.times(), arc.jump_counts()
    assert np.all(np.diff(t) >= 0)
    assert np.all(np.diff(j) >= 0)
    for a, b in zip(arc.segments, arc.segments[1:]):
        assert b.j == a.j + 1 and b.t[0] == a.t[-1]
    with pytest.raises(ValueError):
        arc.segments[0].x[0, 0] = 5.0  # frozen


def test_arc_query():
    lin = HybridSystem(flow=lambda t, x, u: np.array([2.0, 1.0]), jump=lambda t, x, u: np.array([0.0, x[1]]),
                       guard=lambda x: x[0] >= 1.0, names=("y", "t"))
    arc = simulate(lin, [0.0, 0.0], None, 1.2, 0.1)
    seg = arc.segment(0)
    assert np.array_equal(arc_query(arc, float(seg.t[2]), 0), seg.x[2])
    mid = 0.5 * (seg.t[1] + seg.t[2])
    assert np.allclose(arc_query(arc, mid, 0), 0.5 * (seg.x[1] + seg.x[2]), atol=1e-12)
    rec = arc.jumps[0]
    assert np.array_equal(arc_query(arc, rec.t, 0), rec.pre)
    assert np.array_equal(arc_query(arc, rec.t, 1), rec.post)
    with pytest.raises(DomainError):
        arc_query(arc, 0.9, 0)
    with pytest.raises(DomainError):
        arc_query(arc, 0.1, 5)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_partial_arc():
    blow = HybridSystem(  # blows up at t = 1
        flow=lambda t, x, u: x * x, jump=lambda t, x, u: x, guard=lambda x: False, names=("x",))
    with pytest.raises(DivergenceError) as info:
        simulate(blow, [1.0], None, 2.0, 1e-2)
    err = info.value
    assert 0.9 < err.t < 1.1 and err.arc is not None and err.arc.t_final == pytest.approx(err.t)


def test_zeno_detected():
    stuck = HybridSystem(flow=lambda t, x, u: np.zeros(1), jump=lambda t, x, u: x, guard=lambda x: True,
                         names=("x",))
    with pytest.raises(ZenoError):
        simulate(stuck, [0.0], None, 1.0, 0.1, max_jumps=50)


def test_bad_arguments():
    with pytest.raises(ValueError):
        simulate(clock_system(1.0), [0.0], None, 1.0, 0.0)
    with pytest.raises(ValueError):
        simulate(clock_system(1.0), [0.0, 1.0], None, 1.0, 0.1)
    with pytest.raises(ValueError):
        simulate(clock_system(1.0), [math.nan], None, 1.0, 0.1)


def test_zero_horizon():
    arc = simulate(spiral(), [1.0, 0.0], None, 0.0, 0.1)
    assert len(arc.times()) == 1 and arc.jumps == ()


def test_record_every_keeps_endpoints():
    full = simulate(spiral(), [1.0, 0.0], None, 1.0, 0.01)
    thin = simulate(spiral(), [1.0, 0.0], None, 1.0, 0.01, record_every=10)
    assert len(thin.times()) == 11
    assert np.array_equal(thin.final_state, full.final_state)


@settings(max_examples=10, deadline=None)
@given(st.floats(-math.pi, math.pi), st.floats(-2.0, 2.0), st.floats(0.0, 1.0))
def test_reduced_hybrid_matches_fine_step(theta, xi, rho):
    sys = reduced_hybrid_system(1.5, 1.0, 2.0)
    x0 = [math.cos(theta), math.sin(theta), xi, rho]
    coarse = simulate(sys, x0, chi_inputs(1.0), 3.0, 1e-2)
    fine = simulate(sys, x0, chi_inputs(1.0), 3.0, 1e-3)
    assert coarse.j_final == fine.j_final
    assert np.max(np.abs(coarse.final_state - fine.final_state)) < 1e-6


def test_csv_rows(tmp_path):
    arc = simulate(clock_system(200.0), [0.0], None, 0.012, 1e-3)
    path = tmp_path / "arc.csv"
    write_arc_csv(arc, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "j", "event", "rho"]
    events = [r[2] for r in rows[1:]]
    assert events.count("pre") == events.count("post") == len(arc.jumps) == 2
    pre = [r for r in rows[1:] if r[2] == "pre"][0]
    post = [r for r in rows[1:] if r[2] == "post"][0]
    assert pre[0] == post[0] and int(post[1]) == int(pre[1]) + 1
