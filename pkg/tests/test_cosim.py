import math

import numpy as np
import pytest

from hybrid_pmsm.analysis import check_fast_jumps, convergence_report
from hybrid_pmsm.cosim import VARIANTS, CoSim, error_trace

STEP = 2e-6


def test_state_layout_per_variant():
    sizes = {v: len(CoSim(variant=v).names) for v in VARIANTS}
    assert sizes["continuous"] == 13
    assert sizes["hybrid"] == 14
    assert sizes["hybrid+identifier"] == 14 + 2 + 6 + 3 + 4 + 1
    for v in VARIANTS:
        cs = CoSim(variant=v)
        assert cs.initial_state().shape == (sizes[v],)
    with pytest.raises(ValueError):
        CoSim(variant="kalman")
    with pytest.raises(ValueError):
        CoSim(identifier_source="oracle")


def test_exact_start_stays_exact():
    cs = CoSim(variant="hybrid")
    arc = cs.run(cs.initial_state(rotor_angle=1.1), 0.006, STEP, record_every=100)
    tr = error_trace(cs, arc)
    assert np.max(np.abs(tr.xi_t / tr.xi)) < 1e-9
    assert np.max(1.0 - tr.eta1) < 1e-12
    # scaled coordinates: this is RK4 residue at the step used
    assert np.max(tr.fast_norm) < 2e-3
    assert np.allclose(tr.w_hat, tr.w, rtol=1e-8)


def test_clock_period():
    cs = CoSim(variant="hybrid")
    arc = cs.run(cs.initial_state(misalignment=2.0), 0.012, STEP, record_every=100)
    assert [round(r.t * 1e3, 6) for r in arc.jumps] == [5.0, 10.0]
    assert [r.j for r in arc.jumps] == [0, 1]


def test_jumps_preserve_fast_norm():
    cs = CoSim(variant="hybrid")
    x0 = cs.initial_state(rotor_angle=0.2, misalignment=2.5, xi_hat=300.0, h_hat="zero")
    arc = cs.run(x0, 0.021, STEP, record_every=200)
    rep = check_fast_jumps(cs, arc)
    assert rep.checked == 4 and rep.passed, rep


def test_identifier_first_reset():
    cs = CoSim(variant="hybrid+identifier")
    xi = 1.0 / cs.params.phi
    arc = cs.run(cs.initial_state(misalignment=math.pi, xi_hat=0.2 * xi), 0.03, STEP, record_every=500)
    rep = convergence_report(cs, arc)
    assert rep.first_xi_reset is not None
    t, j = rep.first_xi_reset
    assert t == pytest.approx(0.025, abs=1e-9) and j == 4
    k = cs.index("xi_hat")
    assert abs(arc.jumps[4].post[k] - xi) < 0.05 * xi


def test_hybrid_realigns_antipodal_start():
    cs = CoSim(variant="hybrid")
    arc = cs.run(cs.initial_state(misalignment=math.pi), 0.0051, STEP, record_every=100)
    tr = error_trace(cs, arc)
    assert tr.eta1[0] == pytest.approx(-1.0)
    assert tr.eta1[-1] > 0.9


def test_exact_identifier_inputs_recover_xi():
    from hybrid_pmsm.identifier import IdentifierRegisters, xi_star
    from hybrid_pmsm.plant import Ramp, profile_from_segments

    cs0 = CoSim()
    nom = cs0.params.nominal_speed
    prof = profile_from_segments((Ramp(0.1, -0.4 * nom, -nom),), nom)
    cs = CoSim(variant="hybrid+identifier", identifier_source="exact", profile=prof)
    arc = cs.run(cs.initial_state(misalignment=1.0), 0.02, 2e-6, record_every=1000)
    regs = IdentifierRegisters.unpack(arc.final_state[cs.index("nu1"):], cs.N)
    assert regs.count == 4
    assert xi_star(regs) == pytest.approx(-1.0 / cs.params.phi, rel=1e-6)
