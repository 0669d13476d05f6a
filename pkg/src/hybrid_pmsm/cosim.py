"""Plant + observer (+ identifier) co-simulation as one hybrid system.

The plant is integrated in the static frame with the speed as an exogenous
signal; the observer only sees the static-frame current and voltage, rotated
into its own frame at each evaluation. Error coordinates are computed from
the co-simulated states afterwards (see :func:`error_trace`), so the fast
error dynamics never need an explicit expression for ``D+h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import identifier as ident
from .circle import UnitCircle, from_angle, group_mul, rotate
from .hybrid import HybridArc, HybridSystem, simulate
from .observers import (
    ObserverGains,
    back_emf,
    ct_observer_flow,
    error_coords,
    jump_zeta,
    physical_estimates,
)
from .plant import DriveGains, MachineParams, SpeedProfile, chi_quantities, constant_profile, drive_law

VARIANTS = ("continuous", "hybrid", "hybrid+identifier")

PLANT_NAMES = ("i_s1", "i_s2", "zeta_c", "zeta_s", "int_d", "int_q")
OBSERVER_NAMES = ("i_hat1", "i_hat2", "h_hat1", "h_hat2", "zhat_c", "zhat_s", "xi_hat")


@dataclass(frozen=True)
class CoSim:
    """Everything needed to build and evaluate one co-simulation."""

    params: MachineParams = field(default_factory=MachineParams)
    gains: ObserverGains = field(default_factory=ObserverGains)
    profile: SpeedProfile | None = None
    drive: DriveGains = field(default_factory=DriveGains)
    variant: str = "hybrid"
    identifier_source: str = "observer"  # or "exact": feed true h, zeta_chi to the identifier
    frozen_slow: bool = False
    floor: float = ident.DEFAULT_FLOOR
    sat: tuple[float, float] | None = None  # flux saturation bounds, default [0.5, 2] x phi

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.identifier_source not in ("observer", "exact"):
            raise ValueError("identifier_source must be 'observer' or 'exact'")
        if self.profile is None:
            object.__setattr__(self, "profile", constant_profile(self.params.nominal_speed, 1.0))

    @property
    def hybrid(self) -> bool:
        return self.variant != "continuous"

    @property
    def with_identifier(self) -> bool:
        return self.variant == "hybrid+identifier"

    @property
    def N(self) -> int:
        return int(self.gains.window)

    @property
    def saturation(self) -> tuple[float, float]:
        if self.sat is not None:
            return self.sat
        return 0.5 * self.params.phi, 2.0 * self.params.phi

    @property
    def names(self) -> tuple[str, ...]:
        names = PLANT_NAMES + OBSERVER_NAMES
        if self.hybrid:
            names += ("rho",)
        if self.with_identifier:
            names += ident.IdentifierRegisters.packed_names(self.N)
        return names

    def index(self, name: str) -> int:
        return self.names.index(name)

    def system(self) -> HybridSystem:
        return build_system(self)

    def initial_state(self, rotor_angle: float = 0.0, misalignment: float = 0.0,
                      xi_hat: float | None = None, i_s: Sequence[float] = (0.0, 0.0),
                      i_hat: Sequence[float] | None = None, h_hat: Sequence[float] | str = "exact",
                      rho: float = 0.0) -> np.ndarray:
        """Initial co-simulation state.

        ``misalignment`` is the angle of ``eta`` (0 = aligned estimate). ``i_hat``
        defaults to the measured current in the observer frame; ``h_hat="exact"``
        starts the back-EMF estimate at its true value, ``"zero"`` at 0.
        """
        w, dw = self.profile(0.0)
        zeta = from_angle(rotor_angle)
        q = chi_quantities(w, dw, zeta, self.params)
        eta = from_angle(misalignment)
        zhat = group_mul(q.zeta_chi, eta.conj())
        if i_hat is None:
            i_hat = rotate(zhat, i_s, "inverse")
        if isinstance(h_hat, str):
            h_hat = back_emf(q.chi, eta) if h_hat == "exact" else (0.0, 0.0)
        if xi_hat is None:
            xi_hat = q.xi
        x = [*i_s, *zeta, 0.0, 0.0, *i_hat, *h_hat, *zhat, xi_hat]
        if self.hybrid:
            x.append(rho)
        if self.with_identifier:
            x.extend(ident.IdentifierRegisters.empty(self.N).pack())
        return np.array(x, dtype=float)

    def run(self, x0: np.ndarray, horizon: float, step: float = 1e-6, **kw) -> HybridArc:
        return simulate(self.system(), x0, None, horizon, step, **kw)


def build_system(cs: CoSim) -> HybridSystem:
    params, gains, profile, drive = cs.params, cs.gains, cs.profile, cs.drive
    phi = params.phi
    R_over_L = params.R / params.L
    inv_L = 1.0 / params.L
    i_ref = drive.i_ref
    hybrid, with_id, frozen = cs.hybrid, cs.with_identifier, cs.frozen_slow
    exact_id = cs.identifier_source == "exact"
    N = cs.N
    n_obs = len(PLANT_NAMES) + len(OBSERVER_NAMES)
    rate = gains.rate

    def flow(t, x, _u):
        w, _dw = profile(t)
        (i1, i2, zc, zs, int_d, int_q, ih1, ih2, hh1, hh2, zhc, zhs, xih) = x[:n_obs].tolist()
        u_s, d_int = drive_law((i1, i2), i_ref, (zc, zs), w, params, drive, (int_d, int_q))
        # plant
        di1 = -R_over_L * i1 + inv_L * (u_s[0] + w * phi * zs)
        di2 = -R_over_L * i2 + inv_L * (u_s[1] - w * phi * zc)
        # measurements in the observer frame
        i_m = (zhc * i1 + zhs * i2, -zhs * i1 + zhc * i2)
        u_m = (zhc * u_s[0] + zhs * u_s[1], -zhs * u_s[0] + zhc * u_s[1])
        d_ih, d_hh, d_zh, d_xi = ct_observer_flow(
            (ih1, ih2), (hh1, hh2), (zhc, zhs), xih, i_m, u_m, params, gains,
            w_frame=w if frozen else None,
        )
        out = [di1, di2, -w * zs, w * zc, d_int[0], d_int[1], *d_ih, *d_hh, *d_zh, d_xi]
        if hybrid:
            out.append(rate)
        if with_id:
            if exact_id:
                s = 1.0 if w > 0 else -1.0
                chi = abs(w) * phi
                y = (chi * s * zc, chi * s * zs)
            else:
                y = ident.regressor_sample((zhc, zhs), (hh1, hh2))
            out.extend(y)
            out.extend([0.0] * (len(x) - n_obs - 1 - 2))
        return np.array(out)

    def jump(t, x, _u):
        x = x.copy()
        o = len(PLANT_NAMES)
        h_hat = (x[o + 2], x[o + 3])
        z_hat = (x[o + 4], x[o + 5])
        z_new = jump_zeta(h_hat, z_hat)
        # G_f = C[z_new]^T C[z_hat] as a circle element
        gc, gs = rotate(z_new, z_hat, "inverse")
        for k in (o, o + 2):
            a, b = x[k], x[k + 1]
            x[k], x[k + 1] = gc * a - gs * b, gs * a + gc * b
        x[o + 4], x[o + 5] = z_new
        rho_k = o + len(OBSERVER_NAMES)
        x[rho_k] = 0.0
        if with_id:
            a = rho_k + 1
            regs = ident.IdentifierRegisters.unpack(x[a:], N)
            star = ident.xi_star(regs, cs.floor)
            x[o + 6] = ident.xi_jump_policy(x[o + 6], star, regs.count, N, gains.gamma)
            if exact_id:
                w, dw = profile(t)
                q = chi_quantities(w, dw, (x[2], x[3]), params)
                src = (q.zeta_chi, (0.0, -q.chi))
            else:
                src = (z_hat, h_hat)
            x[a:] = ident.ident_jump(regs, *src).pack()
        return x

    def project(x):
        for k in (2, len(PLANT_NAMES) + 4):
            n = math.hypot(x[k], x[k + 1])
            x[k] /= n
            x[k + 1] /= n
        return x

    rho_k = len(PLANT_NAMES) + len(OBSERVER_NAMES)
    guard = (lambda x: x[rho_k] >= 1.0) if hybrid else (lambda x: False)
    return HybridSystem(flow=flow, jump=jump, guard=guard, names=cs.names, project=project)


def hybrid_observer_system(params: MachineParams, gains: ObserverGains, profile: SpeedProfile | None = None,
                           drive: DriveGains | None = None, identifier: bool = False) -> HybridSystem:
    """Hybrid observer coupled to the plant it observes."""
    cs = CoSim(params, gains, profile, drive or DriveGains(),
               variant="hybrid+identifier" if identifier else "hybrid")
    return build_system(cs)


# -- post-processing -------------------------------------------------------------


@dataclass(frozen=True)
class ErrorTrace:
    """Per-sample error signals along a co-simulation arc."""

    t: np.ndarray
    j: np.ndarray
    w: np.ndarray
    w_hat: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    xi: np.ndarray
    xi_t: np.ndarray
    h_t1: np.ndarray
    h_t2: np.ndarray
    fast_norm: np.ndarray
    chi: np.ndarray
    phi_hat: np.ndarray
    rho: np.ndarray

    @property
    def theta_t(self) -> np.ndarray:
        return np.arctan2(self.eta2, self.eta1)

    @property
    def h_t_norm(self) -> np.ndarray:
        return np.hypot(self.h_t1, self.h_t2)


def sample_errors(cs: CoSim, t: float, x: Sequence[float]):
    """``(ErrorState, chi, xi, w, PhysicalEstimates)`` at one sample."""
    params = cs.params
    w, dw = cs.profile(t)
    q = chi_quantities(w, dw, (x[2], x[3]), params)
    o = len(PLANT_NAMES)
    z_hat = UnitCircle(x[o + 4], x[o + 5])
    i_m = rotate(z_hat, (x[0], x[1]), "inverse")
    eps = cs.gains.epsilon(params)
    err = error_coords(i_m, q.chi, q.zeta_chi, q.xi, (x[o], x[o + 1]), (x[o + 2], x[o + 3]), z_hat,
                       x[o + 6], eps, params.L)
    lo, hi = cs.saturation
    est = physical_estimates((x[o + 2], x[o + 3]), z_hat, x[o + 6], lo, hi)
    return err, q.chi, q.xi, w, est


def error_trace(cs: CoSim, arc: HybridArc) -> ErrorTrace:
    t = arc.times()
    X = arc.states()
    cols = {k: np.empty(len(t)) for k in ErrorTrace.__dataclass_fields__ if k not in ("t", "j")}
    rho_k = cs.index("rho") if cs.hybrid else None
    for n in range(len(t)):
        err, chi, xi, w, est = sample_errors(cs, float(t[n]), X[n])
        cols["w"][n] = w
        cols["w_hat"][n] = est.w
        cols["eta1"][n], cols["eta2"][n] = err.eta
        cols["xi"][n] = xi
        cols["xi_t"][n] = err.xi_t
        cols["h_t1"][n], cols["h_t2"][n] = err.h_t
        cols["fast_norm"][n] = err.fast_norm
        cols["chi"][n] = chi
        cols["phi_hat"][n] = est.phi
        cols["rho"][n] = X[n, rho_k] if rho_k is not None else float("nan")
    return ErrorTrace(t=t, j=arc.jump_counts(), **cols)


__all__ = [
    "CoSim",
    "ErrorTrace",
    "VARIANTS",
    "build_system",
    "error_trace",
    "hybrid_observer_system",
    "sample_errors",
]
