"""Phase portraits of the reduced error dynamics on the cylinder
``(theta_t, xi_t)`` and the separatrix through the saddle ``eta = (-1, 0)``.

Near the saddle, with ``p = theta_t - pi``, the linearization is
``[[k_eta chi, chi], [gamma chi, 0]]``. Its negative eigenvalue's eigenvector
spans the curve of starts that converge to the saddle, i.e. the set the
continuous observer cannot leave. That curve is traced by integrating
backwards in time from the saddle along this eigenvector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analysis import sigma_s_array
from .circle import wrap_angle
from .hybrid import HybridArc, simulate
from .observers import chi_inputs, reduced_hybrid_system, reduced_system


@dataclass(frozen=True)
class PortraitSetup:
    chi: float = 1.0
    k_eta: float = 1.5
    gamma: float = 1.0
    rate: float = 1.0  # clock rate in the normalized time of the portrait
    theta_points: int = 12
    xi_points: int = 9
    xi_range: float = 3.0
    horizon: float = 40.0
    step: float = 0.01
    manifold_offset: float = 1e-6
    manifold_horizon: float = 60.0
    manifold_margin: float = 0.1

    def grid(self) -> list[tuple[float, float]]:
        """``theta_t`` uniform on ``[-pi, pi)`` (so the saddle angle is included)
        times ``xi_t`` uniform on ``[-xi_range, xi_range]``."""
        th = -math.pi + 2.0 * math.pi * np.arange(self.theta_points) / self.theta_points
        xi = np.linspace(-self.xi_range, self.xi_range, self.xi_points)
        return [(float(a), float(b)) for a in th for b in xi]


def saddle_linearization(chi: float, k_eta: float, gamma: float) -> np.ndarray:
    """Jacobian of ``(theta_t - pi, xi_t)`` at the saddle."""
    return np.array([[k_eta * chi, chi], [gamma * chi, 0.0]])


def saddle_eigen(chi: float, k_eta: float, gamma: float):
    """``(lambda_u, lambda_s, v_s)``: eigenvalues and the unit eigenvector of
    the contracting direction, oriented with positive first component."""
    A = saddle_linearization(chi, k_eta, gamma)
    vals, vecs = np.linalg.eig(A)
    order = np.argsort(vals.real)
    lam_s, lam_u = float(vals[order[0]].real), float(vals[order[1]].real)
    v = vecs[:, order[0]].real
    v = v / np.linalg.norm(v)
    if v[0] < 0:
        v = -v
    return lam_u, lam_s, v


def _start(theta: float, xi_t: float) -> list[float]:
    # the saddle angle must give eta = (-1, 0) exactly, sin(pi) rounding
    # would otherwise seed an escape along the unstable direction
    if abs(abs(theta) - math.pi) < 1e-15:
        return [-1.0, 0.0, xi_t]
    return [math.cos(theta), math.sin(theta), xi_t]


def saddle_distance(eta1, eta2, xi_t):
    """Distance on the cylinder from ``(eta, xi_t)`` to the saddle."""
    p = np.abs(np.angle(-(np.asarray(eta1) + 1j * np.asarray(eta2))))
    return np.hypot(p, xi_t)


def _backward_system(k_eta: float, gamma: float):
    fwd = reduced_system(k_eta, gamma)
    from .hybrid import HybridSystem

    return HybridSystem(flow=lambda t, x, u: -fwd.flow(t, x, u), jump=fwd.jump, guard=fwd.guard,
                        names=fwd.names, project=fwd.project)


@dataclass(frozen=True)
class ManifoldBranch:
    sign: int
    t: np.ndarray  # backward time
    theta: np.ndarray  # unwrapped
    xi_t: np.ndarray


def trace_separatrix(ps: PortraitSetup) -> list[ManifoldBranch]:
    """Both branches of the saddle's contracting curve, from the saddle outwards."""
    _, _, v = saddle_eigen(ps.chi, ps.k_eta, ps.gamma)
    back = _backward_system(ps.k_eta, ps.gamma)
    out = []
    for sgn in (1, -1):
        d = sgn * ps.manifold_offset * v
        arc = simulate(back, _start(math.pi + d[0], d[1]), chi_inputs(ps.chi),
                       ps.manifold_horizon, ps.step)
        X = arc.states()
        th = np.unwrap(np.arctan2(X[:, 1], X[:, 0]))
        # stop once the curve has left the plotted strip
        outside = np.nonzero(np.abs(X[:, 2]) > 1.5 * ps.xi_range)[0]
        n = outside[0] + 1 if len(outside) else len(th)
        out.append(ManifoldBranch(sgn, arc.times()[:n], th[:n], X[:n, 2]))
    return out


def distance_to_separatrix(theta: float, xi_t: float, branches: list[ManifoldBranch]) -> float:
    """Euclidean distance on the cylinder (angle wrapped) to the traced curve."""
    best = math.inf
    for b in branches:
        dth = np.angle(np.exp(1j * (b.theta - theta)))
        best = min(best, float(np.min(np.hypot(dth, b.xi_t - xi_t))))
    return best


def separatrix_return_distance(ps: PortraitSetup, branch: ManifoldBranch, radius: float = 0.05) -> float:
    """Closest approach to the saddle when running forward from the traced
    point at distance ``radius``.

    A correct trace returns to within about ``manifold_offset`` of the saddle
    before the unstable direction takes over.
    """
    d = saddle_distance(np.cos(branch.theta), np.sin(branch.theta), branch.xi_t)
    k = int(np.argmax(d >= radius))
    if d[k] < radius:
        raise ValueError("traced curve never reaches the requested radius")
    x0 = _start(float(branch.theta[k]), float(branch.xi_t[k]))
    arc = simulate(reduced_system(ps.k_eta, ps.gamma), x0, chi_inputs(ps.chi),
                   2.0 * float(branch.t[k]), ps.step)
    X = arc.states()
    return float(np.min(saddle_distance(X[:, 0], X[:, 1], X[:, 2])))


@dataclass(frozen=True)
class PortraitRun:
    index: int
    theta0: float
    xi0: float
    hybrid: bool
    near_separatrix: bool
    arc: HybridArc

    @property
    def sigma_final(self) -> float:
        e1, e2, xi = self.arc.final_state[:3]
        return float(sigma_s_array(e1, e2, xi))


def portrait_runs(ps: PortraitSetup, hybrid: bool, branches: list[ManifoldBranch] | None = None) -> list[PortraitRun]:
    branches = branches if branches is not None else trace_separatrix(ps)
    if hybrid:
        sys = reduced_hybrid_system(ps.k_eta, ps.gamma, ps.rate)
    else:
        sys = reduced_system(ps.k_eta, ps.gamma)
    runs = []
    for n, (th, xi) in enumerate(ps.grid()):
        x0 = _start(th, xi) + ([0.0] if hybrid else [])
        arc = simulate(sys, x0, chi_inputs(ps.chi), ps.horizon, ps.step)
        near = distance_to_separatrix(th, xi, branches) < ps.manifold_margin
        runs.append(PortraitRun(n, th, xi, hybrid, near, arc))
    return runs


PORTRAIT_COLUMNS = ("kind", "id", "t", "j", "theta_t", "eta1", "eta2", "xi_t", "sigma_s")


def portrait_rows(runs: list[PortraitRun], branches: list[ManifoldBranch], every: int = 1):
    """Rows in :data:`PORTRAIT_COLUMNS` order. Separatrix rows carry negative
    (backward) time and ``j = 0``."""
    for r in runs:
        kind = "hybrid" if r.hybrid else "flow"
        t, jj, X = r.arc.times(), r.arc.jump_counts(), r.arc.states()
        keep = np.zeros(len(t), dtype=bool)
        keep[::every] = True
        keep[-1] = True
        for k in np.nonzero(keep)[0]:
            e1, e2, xi = X[k, :3]
            yield (kind, r.index, float(t[k]), int(jj[k]), wrap_angle(math.atan2(e2, e1)),
                   float(e1), float(e2), float(xi), float(sigma_s_array(e1, e2, xi)))
    for b in branches:
        for k in range(0, len(b.t), every):
            th = b.theta[k]
            e1, e2 = math.cos(th), math.sin(th)
            yield ("separatrix", b.sign, -float(b.t[k]), 0, wrap_angle(th), e1, e2, float(b.xi_t[k]),
                   float(sigma_s_array(e1, e2, b.xi_t[k])))
