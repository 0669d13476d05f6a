"""PMSM electromagnetic model in the static frame, chi-frame quantities,
speed profiles with constant sign, and a sensorized current loop used to
excite the machine.

Speeds are electrical rad/s throughout; ``rpm_to_electrical`` converts the
mechanical rpm figures usually quoted for a machine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .circle import FORWARD, INVERSE, UnitCircle, rotate


@dataclass(frozen=True)
class MachineParams:
    R: float = 0.06  # ohm
    L: float = 33.75e-6  # H
    phi: float = 1.9e-3  # Wb
    pole_pairs: int = 7
    nominal_rpm: float = 6000.0

    def __post_init__(self):
        for name in ("R", "L", "phi", "pole_pairs", "nominal_rpm"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"machine parameter {name} must be positive and finite, got {v!r}")

    @property
    def nominal_speed(self) -> float:
        """Nominal electrical speed in rad/s."""
        return rpm_to_electrical(self.nominal_rpm, self.pole_pairs)

    @property
    def xi(self) -> float:
        """|xi| = 1/phi."""
        return 1.0 / self.phi


def rpm_to_electrical(rpm: float, pole_pairs: int) -> float:
    return rpm * 2.0 * math.pi / 60.0 * pole_pairs


# -- speed profiles ------------------------------------------------------------


class AssumptionViolation(ValueError):
    """A speed profile breaks the constant-sign / bounded-speed assumption."""


@dataclass(frozen=True)
class Constant:
    duration: float
    speed: float

    def eval(self, tau: float) -> tuple[float, float]:
        return self.speed, 0.0

    def bounds(self) -> tuple[float, float, float]:
        """(min |w|, max |w|, max |dw|) over the segment, possibly conservative."""
        a = abs(self.speed)
        return a, a, 0.0

    def endpoints(self) -> tuple[float, float]:
        return self.speed, self.speed


@dataclass(frozen=True)
class Ramp:
    duration: float
    start: float
    end: float

    @property
    def slope(self) -> float:
        return (self.end - self.start) / self.duration

    def eval(self, tau: float) -> tuple[float, float]:
        return self.start + self.slope * tau, self.slope

    def bounds(self):
        if self.start * self.end <= 0:
            lo = 0.0
        else:
            lo = min(abs(self.start), abs(self.end))
        return lo, max(abs(self.start), abs(self.end)), abs(self.slope)

    def endpoints(self):
        return self.start, self.end


@dataclass(frozen=True)
class Chirp:
    """``mean + amplitude * sin(phase(tau))`` with frequency sweeping linearly
    from ``f_start`` to ``f_end`` (Hz) over the segment."""

    duration: float
    mean: float
    amplitude: float
    f_start: float
    f_end: float | None = None

    def _f1(self) -> float:
        return self.f_start if self.f_end is None else self.f_end

    def eval(self, tau: float) -> tuple[float, float]:
        f0, f1 = self.f_start, self._f1()
        k = (f1 - f0) / self.duration
        ph = 2.0 * math.pi * (f0 * tau + 0.5 * k * tau * tau)
        dph = 2.0 * math.pi * (f0 + k * tau)
        return self.mean + self.amplitude * math.sin(ph), self.amplitude * math.cos(ph) * dph

    def bounds(self):
        a = abs(self.amplitude)
        m = abs(self.mean)
        lo = m - a if m > a else 0.0
        return lo, m + a, a * 2.0 * math.pi * max(abs(self.f_start), abs(self._f1()))

    def endpoints(self):
        return self.eval(0.0)[0], self.eval(self.duration)[0]


SegmentType = Union[Constant, Ramp, Chirp]


@dataclass(frozen=True)
class SpeedProfile:
    """Piecewise speed signal; the last value is held after the final segment.

    Construction validates continuity, constant sign, ``w_min <= |w| <= w_max``
    and ``|D+w| <= max_accel``; see :func:`profile_from_segments` for derived
    bounds.
    """

    segments: tuple[SegmentType, ...]
    w_min: float
    w_max: float
    max_accel: float
    starts: tuple[float, ...] = field(init=False, repr=False)

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise AssumptionViolation("speed profile needs at least one segment")
        if not (0 < self.w_min <= self.w_max) or not self.max_accel >= 0:
            raise AssumptionViolation("Assumption 1: need 0 < w_min <= w_max and max_accel >= 0")
        starts, t = [], 0.0
        sign = 0.0
        prev_end = None
        for k, seg in enumerate(segs):
            if not seg.duration > 0:
                raise AssumptionViolation(f"segment {k}: duration must be positive")
            a, b = seg.endpoints()
            if prev_end is not None and abs(a - prev_end) > 1e-9 * max(1.0, abs(prev_end)):
                raise AssumptionViolation(
                    f"Assumption 1: speed is discontinuous at segment {k} ({prev_end} -> {a})"
                )
            prev_end = b
            lo, hi, acc = seg.bounds()
            s = math.copysign(1.0, a) if a != 0 else 0.0
            if lo <= 0.0 or s == 0.0 or (sign != 0.0 and s != sign):
                raise AssumptionViolation(f"Assumption 1: segment {k} crosses or touches zero speed")
            sign = s
            if lo < self.w_min * (1 - 1e-12):
                raise AssumptionViolation(f"Assumption 1: segment {k} drops below w_min={self.w_min}")
            if hi > self.w_max * (1 + 1e-12):
                raise AssumptionViolation(f"Assumption 1: segment {k} exceeds w_max={self.w_max}")
            if acc > self.max_accel * (1 + 1e-12):
                raise AssumptionViolation(f"Assumption 1: segment {k} exceeds max_accel={self.max_accel}")
            starts.append(t)
            t += seg.duration
        object.__setattr__(self, "starts", tuple(starts))

    @property
    def sign(self) -> float:
        return math.copysign(1.0, self.segments[0].endpoints()[0])

    @property
    def duration(self) -> float:
        return self.starts[-1] + self.segments[-1].duration

    def __call__(self, t: float) -> tuple[float, float]:
        return speed_profile_eval(self, t)


def speed_profile_eval(profile: SpeedProfile, t: float) -> tuple[float, float]:
    """``(w, D+w)`` at time ``t``; the derivative is the right derivative."""
    if t < 0:
        raise ValueError(f"speed profile evaluated at negative time {t}")
    starts = profile.starts
    segs = profile.segments
    k = len(starts) - 1
    while k > 0 and t < starts[k]:
        k -= 1
    seg = segs[k]
    tau = t - starts[k]
    if tau >= seg.duration:
        if k == len(segs) - 1:
            return seg.endpoints()[1], 0.0
    return seg.eval(tau)


def constant_profile(speed: float, duration: float = 1.0, w_min: float | None = None) -> SpeedProfile:
    a = abs(speed)
    return SpeedProfile((Constant(duration, speed),), w_min=w_min or 0.1 * a, w_max=a, max_accel=0.0)


def profile_from_segments(segments: Sequence[SegmentType], nominal: float,
                          w_min: float | None = None, w_max: float | None = None,
                          max_accel: float | None = None) -> SpeedProfile:
    """Build a profile, deriving any missing bound from the segments themselves
    (``w_min`` defaults to 0.1 x nominal)."""
    segments = tuple(segments)
    his = [s.bounds()[1] for s in segments]
    accs = [s.bounds()[2] for s in segments]
    return SpeedProfile(
        segments,
        w_min=0.1 * abs(nominal) if w_min is None else w_min,
        w_max=max(his) if w_max is None else w_max,
        max_accel=max(accs) if max_accel is None else max_accel,
    )


def default_profile(params: MachineParams, sign: float = 1.0) -> SpeedProfile:
    """Two seconds: nominal speed, then ramps and a chirp around 75% nominal."""
    w = sign * params.nominal_speed
    chirp = Chirp(0.8, 0.75 * w, 0.2 * w, 1.0, 8.0)
    segs = (
        Constant(0.5, w),
        Ramp(0.1, w, 0.5 * w),
        Constant(0.2, 0.5 * w),
        Ramp(0.1, 0.5 * w, 0.75 * w),
        chirp,
        Ramp(0.3, chirp.endpoints()[1], w),
    )
    return profile_from_segments(segs, params.nominal_speed)


# -- chi frame -----------------------------------------------------------------


@dataclass(frozen=True)
class ChiQuantities:
    chi: float  # V
    xi: float  # 1/Wb
    zeta_chi: UnitCircle
    dchi: float  # V/s, right derivative
    chi_min: float | None = None
    chi_max: float | None = None
    chi_accel: float | None = None


def chi_quantities(w: float, dw: float, zeta: Sequence[float], params: MachineParams,
                   profile: SpeedProfile | None = None) -> ChiQuantities:
    if w == 0.0 or not math.isfinite(w):
        raise AssumptionViolation("chi-frame quantities need nonzero finite speed")
    sgn = 1.0 if w > 0 else -1.0
    phi = params.phi
    bounds = {}
    if profile is not None:
        bounds = dict(chi_min=profile.w_min * phi, chi_max=profile.w_max * phi,
                      chi_accel=profile.max_accel * phi)
    return ChiQuantities(
        chi=abs(w) * phi,
        xi=sgn / phi,
        zeta_chi=UnitCircle(sgn * zeta[0], sgn * zeta[1]),
        dchi=sgn * dw * phi,
        **bounds,
    )


# -- plant ---------------------------------------------------------------------


def plant_flow(i_s: Sequence[float], zeta: Sequence[float], u_s: Sequence[float], w: float,
               params: MachineParams) -> tuple[tuple[float, float], tuple[float, float]]:
    """Right-hand side of the static-frame model: ``(di_s/dt, dzeta/dt)``."""
    R, L, phi = params.R, params.L, params.phi
    c, s = zeta
    # J zeta = (-s, c)
    di = (
        (-R * i_s[0] + u_s[0] + w * phi * s) / L,
        (-R * i_s[1] + u_s[1] - w * phi * c) / L,
    )
    return di, (-w * s, w * c)


def to_rotating_frame(zeta_r: Sequence[float], v_s: Sequence[float]) -> tuple[float, float]:
    """``C[zeta_r]^T v_s``."""
    return rotate(zeta_r, v_s, INVERSE)


def from_rotating_frame(zeta_r: Sequence[float], v_r: Sequence[float]) -> tuple[float, float]:
    return rotate(zeta_r, v_r, FORWARD)


def rotating_frame_flow(i_r: Sequence[float], zeta: Sequence[float], zeta_r: Sequence[float],
                        u_r: Sequence[float], w: float, w_r: float, params: MachineParams):
    """Right-hand side of the model written in a frame rotating with ``zeta_r``.

    Returns ``(di_r, dzeta, dzeta_r)``.
    """
    R, L, phi = params.R, params.L, params.phi
    rel = to_rotating_frame(zeta_r, zeta)
    # -w phi J rel / L - w_r J i_r
    di = (
        (-R * i_r[0] + u_r[0] + w * phi * rel[1]) / L + w_r * i_r[1],
        (-R * i_r[1] + u_r[1] - w * phi * rel[0]) / L - w_r * i_r[0],
    )
    return di, (-w * zeta[1], w * zeta[0]), (-w_r * zeta_r[1], w_r * zeta_r[0])


# -- drive ---------------------------------------------------------------------


@dataclass(frozen=True)
class DriveGains:
    """PI current loop in the true rotor frame, tuned by pole/zero cancellation:
    ``kp = bandwidth * L``, ``ki = bandwidth * R``."""

    bandwidth: float = 2.0 * math.pi * 400.0  # rad/s
    u_max: float = 24.0  # V, magnitude limit (DC-bus stand-in)
    i_ref: tuple[float, float] = (0.0, 2.0)  # A, rotor frame (d, q)

    def kp(self, params: MachineParams) -> float:
        return self.bandwidth * params.L

    def ki(self, params: MachineParams) -> float:
        return self.bandwidth * params.R

    def closed_loop_poles(self, params: MachineParams, w: float) -> np.ndarray:
        """Poles of the rotor-frame error dynamics ``(e, integral e)`` at speed ``w``."""
        L = params.L
        kp, ki = self.kp(params), self.ki(params)
        J = np.array([[0.0, -1.0], [1.0, 0.0]])
        I2 = np.eye(2)
        A = np.block([[-(params.R + kp) / L * I2 - w * J, -ki / L * I2], [I2, np.zeros((2, 2))]])
        return np.linalg.eigvals(A)


def drive_law(i_s, i_ref, zeta, w, params: MachineParams, gains: DriveGains,
              integral=(0.0, 0.0)) -> tuple[tuple[float, float], tuple[float, float]]:
    """Static-frame voltage and integrator rate of the sensorized PI loop.

    ``i_ref`` and ``integral`` (of the current error) are rotor-frame vectors.
    The voltage is ``R i_ref + w phi J e1 + PI(e)`` in the rotor frame, clipped
    to ``gains.u_max``; the integrator is frozen while clipped.
    """
    c, s = zeta
    i_d = c * i_s[0] + s * i_s[1]
    i_q = -s * i_s[0] + c * i_s[1]
    e_d, e_q = i_ref[0] - i_d, i_ref[1] - i_q
    kp, ki = gains.bandwidth * params.L, gains.bandwidth * params.R
    u_d = params.R * i_ref[0] + kp * e_d + ki * integral[0]
    u_q = params.R * i_ref[1] + w * params.phi + kp * e_q + ki * integral[1]
    m = math.hypot(u_d, u_q)
    if m > gains.u_max:
        u_d *= gains.u_max / m
        u_q *= gains.u_max / m
        e_d = e_q = 0.0
    return (c * u_d - s * u_q, s * u_d + c * u_q), (e_d, e_q)


def drive_voltage(i_s: Sequence[float], i_ref: Sequence[float], zeta: Sequence[float], w: float,
                  params: MachineParams, gains: DriveGains,
                  integral: Sequence[float] = (0.0, 0.0)) -> tuple[float, float]:
    return drive_law(i_s, i_ref, zeta, w, params, gains, integral)[0]
