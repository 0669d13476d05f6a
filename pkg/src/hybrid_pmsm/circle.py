"""Arithmetic on the unit circle S^1.

Points are stored as ``(c, s)`` pairs. ``C[z]`` denotes the rotation matrix
``[[c, -s], [s, c]]`` and ``J`` the quarter-turn ``[[0, -1], [1, 0]]``.
Everything here works on plain floats so the flow maps stay cheap.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

FORWARD = "forward"
INVERSE = "inverse"


class UnitCircle(NamedTuple):
    c: float
    s: float

    @property
    def angle(self) -> float:
        """Wrapped angle in [-pi, pi)."""
        return wrap_angle(math.atan2(self.s, self.c))

    def matrix(self) -> np.ndarray:
        return rotation_matrix(self)

    def conj(self) -> "UnitCircle":
        return UnitCircle(self.c, -self.s)

    def __neg__(self) -> "UnitCircle":  # type: ignore[override]
        return UnitCircle(-self.c, -self.s)


IDENTITY = UnitCircle(1.0, 0.0)


def from_angle(theta: float) -> UnitCircle:
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    return UnitCircle(math.cos(theta), math.sin(theta))


def normalize(z: Sequence[float]) -> UnitCircle:
    c, s = float(z[0]), float(z[1])
    n = math.hypot(c, s)
    if n == 0.0 or not math.isfinite(n):
        raise ValueError(f"cannot project {z!r} onto the unit circle")
    return UnitCircle(c / n, s / n)


def group_mul(z1: Sequence[float], z2: Sequence[float]) -> UnitCircle:
    """Group product ``C[z1] z2`` (commutative), renormalized."""
    c1, s1 = z1
    c2, s2 = z2
    return normalize((c1 * c2 - s1 * s2, s1 * c2 + c1 * s2))


def rotate(z: Sequence[float], v: Sequence[float], direction: str = FORWARD) -> tuple[float, float]:
    """``C[z] v`` (forward) or ``C[z]^T v`` (inverse)."""
    c, s = z
    x, y = v
    if direction == FORWARD:
        return (c * x - s * y, s * x + c * y)
    if direction == INVERSE:
        return (c * x + s * y, -s * x + c * y)
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def skew_mul(v: Sequence[float]) -> tuple[float, float]:
    """``J v``."""
    return (-v[1], v[0])


def rotation_matrix(z: Sequence[float]) -> np.ndarray:
    c, s = z
    return np.array([[c, -s], [s, c]])


SKEW = np.array([[0.0, -1.0], [1.0, 0.0]])


def atan2_select(y: float, x: float) -> float:
    """Single-valued selection of the set-valued atan2.

    On the negative x-axis the set ``{-pi, pi}`` resolves to ``+pi``; at the
    origin the set ``[-pi, pi]`` resolves to 0.
    """
    if y == 0.0:
        if x < 0.0:
            return math.pi
        if x == 0.0:
            return 0.0
        return 0.0
    return math.atan2(y, x)


def wrap_angle(theta: float) -> float:
    """Wrap into [-pi, pi)."""
    w = math.fmod(theta + math.pi, 2.0 * math.pi)
    if w < 0.0:
        w += 2.0 * math.pi
    return w - math.pi
