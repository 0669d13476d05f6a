"""Mini-batch least-squares identifier of ``xi`` driven by the observer clock.

Between clock jumps only ``nu`` integrates the position-scaled back-EMF
``y = C[zeta_hat] J h_hat``. At every jump the shift registers take one new
sample: ``Y`` stores ``y``, ``Z`` stores ``|h_hat|`` and ``Phi`` stores the
window product ``J nu |h_hat| Z_N`` built with the *previous* ``Z_N``. With
``X_i = Z_{i-1} Y_i - Z_i Y_{i-1}`` the regression ``X_i = Phi_i xi`` is exact
when ``h_hat`` is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .circle import rotate

DEFAULT_FLOOR = 1e-12


@dataclass(frozen=True)
class IdentifierRegisters:
    nu: tuple[float, float]
    Y: np.ndarray  # (N+1, 2), oldest first
    Z: np.ndarray  # (N+1,)
    Phi: np.ndarray  # (N, 2), Phi[k] is slot k+1
    count: int = 0  # jumps seen so far

    @property
    def N(self) -> int:
        return len(self.Phi)

    @property
    def ready(self) -> bool:
        return self.count >= self.N + 1

    @classmethod
    def empty(cls, N: int) -> "IdentifierRegisters":
        if N < 1:
            raise ValueError("window N must be >= 1")
        return cls((0.0, 0.0), np.zeros((N + 1, 2)), np.zeros(N + 1), np.zeros((N, 2)), 0)

    # flat layout used inside the co-simulation state vector
    def pack(self) -> np.ndarray:
        return np.concatenate([self.nu, self.Y.ravel(), self.Z, self.Phi.ravel(), [self.count]])

    @classmethod
    def unpack(cls, flat: Sequence[float], N: int) -> "IdentifierRegisters":
        flat = np.asarray(flat, dtype=float)
        a = 2
        Y = flat[a:a + 2 * (N + 1)].reshape(N + 1, 2)
        a += 2 * (N + 1)
        Z = flat[a:a + N + 1]
        a += N + 1
        Phi = flat[a:a + 2 * N].reshape(N, 2)
        a += 2 * N
        return cls((float(flat[0]), float(flat[1])), Y.copy(), Z.copy(), Phi.copy(), int(round(flat[a])))

    @staticmethod
    def packed_names(N: int) -> tuple[str, ...]:
        names = ["nu1", "nu2"]
        names += [f"Y{i}_{c}" for i in range(N + 1) for c in (1, 2)]
        names += [f"Z{i}" for i in range(N + 1)]
        names += [f"Phi{i}_{c}" for i in range(1, N + 1) for c in (1, 2)]
        names.append("id_count")
        return tuple(names)


def regressor_sample(zeta_hat: Sequence[float], h_hat: Sequence[float]) -> tuple[float, float]:
    """``C[zeta_hat] J h_hat``, a perturbed estimate of ``chi * zeta_chi``."""
    return rotate(zeta_hat, (-h_hat[1], h_hat[0]))


def ident_flow(zeta_hat: Sequence[float], h_hat: Sequence[float]) -> tuple[float, float]:
    """Rate of ``nu``; every register has zero flow."""
    return regressor_sample(zeta_hat, h_hat)


def ident_jump(regs: IdentifierRegisters, zeta_hat: Sequence[float],
               h_hat: Sequence[float]) -> IdentifierRegisters:
    y = regressor_sample(zeta_hat, h_hat)
    z = math.hypot(h_hat[0], h_hat[1])
    nu = regs.nu
    # J nu |h| Z_N, with Z_N the sample from the previous jump
    phi_new = (-nu[1] * z * regs.Z[-1], nu[0] * z * regs.Z[-1])
    Y = np.vstack([regs.Y[1:], [y]])
    Z = np.append(regs.Z[1:], z)
    Phi = np.vstack([regs.Phi[1:], [phi_new]])
    return IdentifierRegisters((0.0, 0.0), Y, Z, Phi, regs.count + 1)


@dataclass(frozen=True)
class RegressionBatch:
    X: np.ndarray  # (N, 2)
    Phi: np.ndarray  # (N, 2)

    @property
    def energy(self) -> float:
        """``sum |Phi_i|^2``."""
        return float(np.sum(self.Phi * self.Phi))

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        return self.X.ravel(), self.Phi.ravel()


def regression_batch(regs: IdentifierRegisters) -> RegressionBatch:
    Y, Z = regs.Y, regs.Z
    X = Z[:-1, None] * Y[1:] - Z[1:, None] * Y[:-1]
    return RegressionBatch(X, regs.Phi.copy())


class XiStar(NamedTuple):
    value: float
    degenerate: bool


def solve_xi_star(batch: RegressionBatch, floor: float = DEFAULT_FLOOR) -> XiStar:
    """Scalar least squares ``argmin |X - Phi theta|^2``.

    Follows the pseudoinverse convention (value 0 when ``Phi = 0``) and flags
    the batch as degenerate when ``sum |Phi_i|^2 < floor``; a degenerate
    solution must not be used to reset ``xi_hat``.
    """
    x, phi = batch.stacked()
    energy = float(phi @ phi)
    value = float(phi @ x) / energy if energy > 0.0 else 0.0
    return XiStar(value, energy < floor or energy == 0.0)


def xi_star(regs: IdentifierRegisters, floor: float = DEFAULT_FLOOR) -> float | None:
    """Usable estimate from the registers, or ``None`` if not ready or degenerate."""
    if not regs.ready:
        return None
    sol = solve_xi_star(regression_batch(regs), floor)
    return None if sol.degenerate else sol.value


def jump_threshold(gamma: float) -> float:
    return 4.0 * math.sqrt(gamma)


def xi_jump_policy(xi_hat: float, xi_star: float | None, j: int, N: int, gamma: float) -> float:
    """Reset ``xi_hat`` to ``xi_star`` only once the registers have been ready
    for a full jump (``j > N + 1``) and the disagreement exceeds ``4 sqrt(gamma)``."""
    if xi_star is None or j <= N + 1:
        return xi_hat
    if abs(xi_hat - xi_star) <= jump_threshold(gamma):
        return xi_hat
    return xi_star

