import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_pmsm.circle import from_angle, rotate
from hybrid_pmsm.hybrid import HybridSystem, simulate
from hybrid_pmsm.plant import (
    AssumptionViolation,
    Chirp,
    Constant,
    DriveGains,
    MachineParams,
    Ramp,
    SpeedProfile,
    chi_quantities,
    constant_profile,
    default_profile,
    drive_law,
    drive_voltage,
    from_rotating_frame,
    plant_flow,
    profile_from_segments,
    rotating_frame_flow,
    rpm_to_electrical,
    speed_profile_eval,
    to_rotating_frame,
)

P = MachineParams()
W_NOM = P.nominal_speed


def test_reference_machine_constants():
    assert W_NOM == pytest.approx(6000 * 2 * math.pi / 60 * 7)
    assert W_NOM == pytest.approx(4398.2, abs=0.05)
    q = chi_quantities(W_NOM, 0.0, (1.0, 0.0), P)
    assert q.chi == pytest.approx(8.357, abs=5e-4)
    assert q.xi == pytest.approx(526.3, abs=0.05)
    assert q.dchi == 0.0


def test_machine_validation():
    with pytest.raises(ValueError):
        MachineParams(R=-1.0)
    with pytest.raises(ValueError):
        MachineParams(L=math.nan)


def test_negative_speed_chi_frame():
    z = from_angle(0.7)
    q = chi_quantities(-W_NOM, 0.0, z, P)
    assert q.zeta_chi == (-z[0], -z[1])
    assert q.xi < 0 and q.chi > 0
    with pytest.raises(AssumptionViolation):
        chi_quantities(0.0, 0.0, z, P)


def test_chi_derivative_sign():
    q = chi_quantities(-W_NOM, -1000.0, (1.0, 0.0), P)
    # |w| grows when w < 0 decreases
    assert q.dchi == pytest.approx(1000.0 * P.phi)


def test_plant_flow_examples():
    z = from_angle(0.4)
    i = (1.5, -0.5)
    w = 3000.0
    jz = (-z[1], z[0])
    u = (w * P.phi * jz[0] + P.R * i[0], w * P.phi * jz[1] + P.R * i[1])
    di, _ = plant_flow(i, z, u, w, P)
    assert np.allclose(di, 0.0, atol=1e-9)
    di, dz = plant_flow((1.0, 0.0), (1.0, 0.0), (0.0, 0.0), 0.0, P)
    assert di == pytest.approx((-P.R / P.L, 0.0))
    assert dz == (0.0, 0.0)


def plant_system(u, w):
    def flow(t, x, _):
        di, dz = plant_flow(x[:2], x[2:], u, w, P)
        return np.array([*di, *dz])

    def project(x):
        x = x.copy()
        x[2:] /= math.hypot(x[2], x[3])
        return x

    return HybridSystem(flow=flow, jump=lambda t, x, _: x, guard=lambda x: False,
                        names=("i1", "i2", "zc", "zs"), project=project)


def analytic_current(t, i0, z0, u, w):
    a = P.R / P.L
    I0, Z0, U = complex(*i0), complex(*z0), complex(*u)
    lam = a + 1j * w
    I = (cmath.exp(-a * t) * I0 + U / P.L * (1 - cmath.exp(-a * t)) / a
         - 1j * w * P.phi * Z0 / P.L * (cmath.exp(1j * w * t) - cmath.exp(-a * t)) / lam)
    return I.real, I.imag


def test_plant_matches_analytic_solution():
    u, w = (2.0, -1.0), W_NOM
    z0 = from_angle(0.3)
    arc = simulate(plant_system(u, w), [0.5, -0.2, *z0], None, 0.01, 1e-6, record_every=100)
    for t, x in zip(arc.times(), arc.states()):
        assert np.allclose(x[:2], analytic_current(t, (0.5, -0.2), z0, u, w), atol=1e-8, rtol=0)
        assert abs(math.hypot(x[2], x[3]) - 1.0) < 1e-9


def test_rotating_frame_round_trip():
    z = from_angle(1.1)
    v = (0.3, -2.0)
    assert to_rotating_frame((1.0, 0.0), v) == v
    assert np.allclose(from_rotating_frame(z, to_rotating_frame(z, v)), v, atol=1e-12)


def test_rotating_frame_equivalence():
    w, w_r = W_NOM, 0.8 * W_NOM
    u_s = (1.0, 0.5)
    z0 = from_angle(0.2)
    zr0 = from_angle(-0.4)
    static = simulate(plant_system(u_s, w), [0.1, 0.2, *z0], None, 0.01, 1e-6, record_every=500)

    def flow(t, x, _):
        # the static voltage seen in the rotating frame
        u_r = to_rotating_frame(x[4:], u_s)
        di, dz, dzr = rotating_frame_flow(x[:2], x[2:4], x[4:], u_r, w, w_r, P)
        return np.array([*di, *dz, *dzr])

    i_r0 = to_rotating_frame(zr0, (0.1, 0.2))
    rot = simulate(HybridSystem(flow=flow, jump=lambda t, x, _: x, guard=lambda x: False,
                                names=("i1", "i2", "zc", "zs", "rc", "rs")),
                   [*i_r0, *z0, *zr0], None, 0.01, 1e-6, record_every=500)
    for xs, xr in zip(static.states(), rot.states()):
        assert np.allclose(from_rotating_frame(xr[4:], xr[:2]), xs[:2], atol=1e-8, rtol=0)


def test_profile_segments():
    prof = profile_from_segments(
        [Constant(0.1, W_NOM), Ramp(0.1, W_NOM, 0.5 * W_NOM), Constant(0.1, 0.5 * W_NOM)], W_NOM)
    assert prof(0.05) == (W_NOM, 0.0)
    w, dw = prof(0.15)
    assert w == pytest.approx(0.75 * W_NOM)
    assert dw == pytest.approx(-0.5 * W_NOM / 0.1)
    # held after the last segment
    assert prof(10.0) == (0.5 * W_NOM, 0.0)
    assert prof.duration == pytest.approx(0.3)
    assert prof.sign == 1.0
    with pytest.raises(ValueError):
        speed_profile_eval(prof, -1.0)


def test_ramp_slope_example():
    r = Ramp(0.1, 0.5 * W_NOM, W_NOM)
    assert r.eval(0.05)[1] == pytest.approx(2.2e4, rel=1e-3)


def test_right_derivative_at_breakpoint():
    prof = profile_from_segments([Constant(0.1, W_NOM), Ramp(0.1, W_NOM, 0.5 * W_NOM)], W_NOM)
    assert prof(0.1)[1] == pytest.approx(-0.5 * W_NOM / 0.1)


@pytest.mark.parametrize("segments", [
    [Ramp(0.1, W_NOM, -W_NOM)],
    [Constant(0.1, W_NOM), Constant(0.1, -W_NOM)],
    [Chirp(0.5, 0.1 * W_NOM, 0.5 * W_NOM, 1.0)],
])
def test_zero_crossing_rejected(segments):
    with pytest.raises(AssumptionViolation, match="Assumption 1"):
        profile_from_segments(segments, W_NOM)


def test_bound_violations():
    with pytest.raises(AssumptionViolation, match="w_min"):
        profile_from_segments([Constant(0.1, 0.05 * W_NOM)], W_NOM)
    with pytest.raises(AssumptionViolation, match="w_max"):
        profile_from_segments([Constant(0.1, W_NOM)], W_NOM, w_max=0.5 * W_NOM)
    with pytest.raises(AssumptionViolation, match="max_accel"):
        profile_from_segments([Ramp(0.1, W_NOM, 0.5 * W_NOM)], W_NOM, max_accel=1.0)
    with pytest.raises(AssumptionViolation, match="discontinuous"):
        profile_from_segments([Constant(0.1, W_NOM), Constant(0.1, 0.5 * W_NOM)], W_NOM)
    with pytest.raises(AssumptionViolation):
        SpeedProfile((), 1.0, 2.0, 0.0)


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_default_profile_valid(sign):
    prof = default_profile(P, sign)
    assert prof.duration == pytest.approx(2.0)
    assert prof.sign == sign
    ts = np.linspace(0, 2, 4001)
    ws = np.array([prof(t)[0] for t in ts])
    assert np.all(np.sign(ws) == sign)
    assert np.all(np.abs(ws) >= prof.w_min) and np.all(np.abs(ws) <= prof.w_max * (1 + 1e-12))
    # speeds are continuous: no jumps larger than max_accel allows
    assert np.max(np.abs(np.diff(ws))) <= prof.max_accel * (ts[1] - ts[0]) * 1.01


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 1.0), st.floats(0.0, 0.5), st.floats(0.5, 5.0))
def test_chirp_derivative_matches_finite_difference(mean, amp, f):
    c = Chirp(1.0, mean * W_NOM, amp * mean * W_NOM, f, 2 * f)
    tau, h = 0.37, 1e-6
    fd = (c.eval(tau + h)[0] - c.eval(tau - h)[0]) / (2 * h)
    assert c.eval(tau)[1] == pytest.approx(fd, rel=1e-5, abs=1e-3)


def test_constant_profile():
    prof = constant_profile(-W_NOM, 0.5)
    assert prof(0.2) == (-W_NOM, 0.0) and prof.sign == -1.0


def test_rpm_conversion():
    assert rpm_to_electrical(60.0, 1) == pytest.approx(2 * math.pi)


def test_drive_feedforward_at_zero_error():
    g = DriveGains()
    z = from_angle(0.9)
    i_ref = (0.3, 2.0)
    i_s = rotate(z, i_ref)
    u = drive_voltage(i_s, i_ref, z, W_NOM, P, g)
    expected = np.array(rotate(z, (P.R * i_ref[0], P.R * i_ref[1]))) + W_NOM * P.phi * np.array([-z[1], z[0]])
    assert np.allclose(u, expected, atol=1e-12)


def test_drive_clips_and_freezes_integrator():
    g = DriveGains(u_max=1.0)
    u, d_int = drive_law((0.0, 0.0), (0.0, 50.0), (1.0, 0.0), W_NOM, P, g)
    assert math.hypot(*u) == pytest.approx(1.0)
    assert d_int == (0.0, 0.0)


def drive_system(g, w, i_ref):
    def flow(t, x, _):
        u, d_int = drive_law(x[:2], i_ref, x[2:4], w, P, g, x[4:])
        di, dz = plant_flow(x[:2], x[2:4], u, w, P)
        return np.array([*di, *dz, *d_int])

    return HybridSystem(flow=flow, jump=lambda t, x, _: x, guard=lambda x: False,
                        names=("i1", "i2", "zc", "zs", "ed", "eq"))


def test_current_step_settles_within_five_time_constants():
    g = DriveGains()
    tau = 1.0 / np.min(np.abs(g.closed_loop_poles(P, W_NOM).real))
    i_ref = (0.0, 2.0)
    arc = simulate(drive_system(g, W_NOM, i_ref), [0, 0, 1, 0, 0, 0], None, 5 * tau, 1e-6, record_every=50)
    x = arc.final_state
    i_dq = rotate(x[2:4], x[:2], "inverse")
    assert math.hypot(i_dq[0] - i_ref[0], i_dq[1] - i_ref[1]) < 0.02 * 2.0
    u_peak = max(math.hypot(*drive_law(s[:2], i_ref, s[2:4], W_NOM, P, g, s[4:])[0]) for s in arc.states())
    assert u_peak <= g.u_max + 1e-12


def test_closed_loop_poles_stable():
    for w in (0.1 * W_NOM, W_NOM, 2 * W_NOM):
        assert np.all(DriveGains().closed_loop_poles(P, w).real < 0)
