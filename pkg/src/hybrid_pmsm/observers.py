"""Continuous-time and hybrid sensorless observers, their jump maps, the
reduced attitude-error dynamics on the cylinder, and error coordinates.

Frames: quantities subscripted ``chi_hat`` live in the frame of the estimate
``zeta_hat`` (the observer's own frame); ``h = -chi J eta`` is the back-EMF
seen in that frame and ``eta = C[zeta_hat]^T zeta_chi`` the misalignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .circle import INVERSE, UnitCircle, atan2_select, normalize, rotate
from .hybrid import HybridSystem
from .plant import MachineParams


@dataclass(frozen=True)
class ObserverGains:
    kp: float = 2.18e4  # 1/s
    ki: float = 9.34e3
    k_eta: float = 95.7
    gamma: float = 4582.0
    rate: float = 200.0  # clock rate Lambda, 1/s
    window: int = 2  # identifier batch size N

    def __post_init__(self):
        for name in ("kp", "ki", "k_eta", "gamma", "rate"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"observer gain {name} must be positive, got {v!r}")
        if int(self.window) != self.window or self.window < 1:
            raise ValueError("identifier window N must be an integer >= 1")

    def epsilon(self, params: MachineParams) -> float:
        """Fast time constant from ``R/L + kp = 2/eps``."""
        return 2.0 / (self.kp + params.R / params.L)

    def consistent_ki(self, params: MachineParams) -> float:
        """``2 L / eps^2``, the ki value that matches kp exactly."""
        return 2.0 * params.L / self.epsilon(params) ** 2

    @classmethod
    def from_epsilon(cls, eps: float, params: MachineParams, **slow) -> "ObserverGains":
        """Fast gains placing both error modes at rate ``1/eps``."""
        kp = 2.0 / eps - params.R / params.L
        if kp <= 0:
            raise ValueError(f"eps={eps} too large: kp would be {kp}")
        return cls(kp=kp, ki=2.0 * params.L / eps**2, **slow)

    def with_epsilon(self, eps: float, params: MachineParams) -> "ObserverGains":
        return ObserverGains.from_epsilon(eps, params, k_eta=self.k_eta, gamma=self.gamma,
                                          rate=self.rate, window=self.window)


# -- continuous-time observer ----------------------------------------------------


def frame_speed(h_hat: Sequence[float], xi_hat: float, k_eta: float) -> float:
    """``|h_hat| xi_hat + k_eta h_hat_1``: angular speed of the estimated frame."""
    return math.hypot(h_hat[0], h_hat[1]) * xi_hat + k_eta * h_hat[0]


def ct_observer_flow(i_hat, h_hat, zeta_hat, xi_hat, i_meas, u_meas, params: MachineParams,
                     gains: ObserverGains, w_frame: float | None = None):
    """Observer flow. ``i_meas``/``u_meas`` are the measured current and voltage
    rotated into the ``zeta_hat`` frame.

    ``w_frame`` overrides the frame speed; used only for frozen-slow
    experiments, where the adaptation of ``xi_hat`` is switched off too.

    Returns ``(di_hat, dh_hat, dzeta_hat, dxi_hat)``.
    """
    R_L = params.R / params.L
    inv_L = 1.0 / params.L
    frozen = w_frame is not None
    w = frame_speed(h_hat, xi_hat, gains.k_eta) if not frozen else w_frame
    e0 = i_meas[0] - i_hat[0]
    e1 = i_meas[1] - i_hat[1]
    # -w J i_meas = (w i2, -w i1)
    di = (
        -R_L * i_hat[0] + inv_L * (u_meas[0] + h_hat[0]) + w * i_meas[1] + gains.kp * e0,
        -R_L * i_hat[1] + inv_L * (u_meas[1] + h_hat[1]) - w * i_meas[0] + gains.kp * e1,
    )
    dh = (gains.ki * e0, gains.ki * e1)
    dz = (-w * zeta_hat[1], w * zeta_hat[0])
    dxi = 0.0 if frozen else gains.gamma * h_hat[0]
    return di, dh, dz, dxi


@dataclass(frozen=True)
class PhysicalEstimates:
    w: float  # rad/s electrical
    zeta: UnitCircle
    phi: float  # Wb


def physical_estimates(h_hat, zeta_hat, xi_hat, sat_lo: float, sat_hi: float,
                       k_eta: float | None = None) -> PhysicalEstimates:
    """Speed, rotor angle and flux read off the observer state.

    Pass ``k_eta`` to include the ``k_eta h_hat_1`` term in the speed output.
    ``sgn(0)`` is taken as +1.
    """
    if not 0 < sat_lo < sat_hi:
        raise ValueError("need 0 < sat_lo < sat_hi")
    w = math.hypot(h_hat[0], h_hat[1]) * xi_hat
    if k_eta is not None:
        w += k_eta * h_hat[0]
    sgn = -1.0 if xi_hat < 0 else 1.0
    zeta = UnitCircle(sgn * zeta_hat[0], sgn * zeta_hat[1])
    a = abs(xi_hat)
    phi = sat_hi if a == 0.0 else min(max(1.0 / a, sat_lo), sat_hi)
    return PhysicalEstimates(w, zeta, phi)


# -- jump maps -------------------------------------------------------------------


def jump_zeta(h_hat: Sequence[float], zeta_hat: Sequence[float]) -> UnitCircle:
    """Reset of the estimated frame.

    With ``h_hat_2 >= 0`` the frame is moved so that the misalignment is
    reflected into the right half-plane; otherwise it is kept. ``h_hat = 0``
    keeps the frame.
    """
    if h_hat[1] < 0.0 or (h_hat[0] == 0.0 and h_hat[1] == 0.0):
        return UnitCircle(float(zeta_hat[0]), float(zeta_hat[1]))
    # C[zeta_hat] J h_hat
    x, y = rotate(zeta_hat, (-h_hat[1], h_hat[0]))
    theta = atan2_select(y, x)
    c2, s2 = math.cos(2.0 * theta), math.sin(2.0 * theta)
    zc, zs = rotate(zeta_hat, (c2, s2), INVERSE)
    return normalize((-zc, -zs))


def jump_frame(h_hat: Sequence[float], zeta_hat: Sequence[float]) -> np.ndarray:
    """Rotation ``C[zeta_hat+]^T C[zeta_hat]`` taking old-frame vectors to the new frame."""
    zp = jump_zeta(h_hat, zeta_hat)
    c, s = _frame_change(zp, zeta_hat)
    return np.array([[c, -s], [s, c]])


def _frame_change(z_new, z_old) -> tuple[float, float]:
    """``C[z_new]^T z_old`` as a circle element (the rotation G_f)."""
    return rotate(z_new, z_old, INVERSE)


# -- reduced error dynamics ------------------------------------------------------


def reduced_flow(eta: Sequence[float], xi_t: float, chi: float, k_eta: float, gamma: float):
    """``(deta, dxi_t)`` on the cylinder."""
    a = chi * xi_t - k_eta * chi * eta[1]
    return (-a * eta[1], a * eta[0]), -gamma * chi * eta[1]


def reduced_jump_eta(eta: Sequence[float]) -> tuple[float, float]:
    """``-F eta`` when ``eta_1 <= 0``, identity otherwise."""
    if eta[0] <= 0.0:
        return (-eta[0], eta[1])
    return (eta[0], eta[1])


ChiSignal = Callable[[float], float]


def _as_chi(chi) -> ChiSignal:
    if callable(chi):
        return chi
    c = float(chi)
    return lambda t: c


def _project_eta(x: np.ndarray) -> np.ndarray:
    n = math.hypot(x[0], x[1])
    if n != 1.0:
        x = x.copy()
        x[0] /= n
        x[1] /= n
    return x


def reduced_system(k_eta: float, gamma: float) -> HybridSystem:
    """Continuous reduced dynamics as a hybrid system with an empty jump set.

    State ``(eta1, eta2, xi_t)``; the input is ``chi`` (value or ``chi(t)``)
    passed through ``simulate(..., inputs=...)``.
    """

    def flow(t, x, chi):
        (d1, d2), dx = reduced_flow((x[0], x[1]), x[2], chi, k_eta, gamma)
        return np.array([d1, d2, dx])

    return HybridSystem(flow=flow, jump=lambda t, x, u: x, guard=lambda x: False,
                        names=("eta1", "eta2", "xi_t"), project=_project_eta)


def reduced_hybrid_system(k_eta: float, gamma: float, rate: float) -> HybridSystem:
    """Reduced dynamics plus clock, with the reflection jump at ``rho = 1``.

    State ``(eta1, eta2, xi_t, rho)``. At ``eta1 = 0`` both jump branches give
    the same point, so the single-valued selection loses nothing.
    """

    def flow(t, x, chi):
        (d1, d2), dx = reduced_flow((x[0], x[1]), x[2], chi, k_eta, gamma)
        return np.array([d1, d2, dx, rate])

    def jump(t, x, chi):
        e1, e2 = reduced_jump_eta((x[0], x[1]))
        return np.array([e1, e2, x[2], 0.0])

    return HybridSystem(flow=flow, jump=jump, guard=lambda x: x[3] >= 1.0,
                        names=("eta1", "eta2", "xi_t", "rho"), project=_project_eta)


def chi_inputs(chi) -> Callable[[float], float]:
    """Wrap a constant or callable ``chi`` for :func:`hybrid.simulate`."""
    return _as_chi(chi)


# -- error coordinates -----------------------------------------------------------


def fast_transform(eps: float, L: float) -> np.ndarray:
    """``T`` with ``x_f = T (i_tilde, h_tilde)``."""
    I = np.eye(2)
    return np.block([[I / eps, np.zeros((2, 2))], [-I / eps, I / L]])


A_FAST = np.block([[-np.eye(2), np.eye(2)], [-np.eye(2), -np.eye(2)]])
B_FAST = np.vstack([np.zeros((2, 2)), np.eye(2)])


@dataclass(frozen=True)
class ErrorState:
    eta: UnitCircle
    xi_t: float
    i_t: tuple[float, float]
    h_t: tuple[float, float]
    x_f: np.ndarray

    @property
    def fast_norm(self) -> float:
        return float(np.linalg.norm(self.x_f))


def back_emf(chi: float, eta: Sequence[float]) -> tuple[float, float]:
    """``h = -chi J eta``."""
    return (chi * eta[1], -chi * eta[0])


def error_coords(i_meas, chi: float, zeta_chi, xi: float, i_hat, h_hat, zeta_hat, xi_hat,
                 eps: float, L: float) -> ErrorState:
    """Error coordinates of the observer against the true signals.

    ``i_meas`` is the true current in the ``zeta_hat`` frame.
    """
    eta = normalize(rotate(zeta_hat, zeta_chi, INVERSE))
    h = back_emf(chi, eta)
    i_t = (i_meas[0] - i_hat[0], i_meas[1] - i_hat[1])
    h_t = (h[0] - h_hat[0], h[1] - h_hat[1])
    x_f = np.array([
        i_t[0] / eps,
        i_t[1] / eps,
        -i_t[0] / eps + h_t[0] / L,
        -i_t[1] / eps + h_t[1] / L,
    ])
    return ErrorState(eta, xi - xi_hat, i_t, h_t, x_f)
