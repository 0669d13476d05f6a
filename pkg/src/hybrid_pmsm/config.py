"""Scenario files: TOML with sections ``machine``, ``profile``, ``observer``,
``drive``, ``initial``, ``run``, ``portrait`` and ``sweep``. Every key has a
default reproducing the reference UAV propeller motor setup.

Speeds in ``profile`` are per-unit of the nominal electrical speed unless
the key ends in ``_rad_s``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .cosim import VARIANTS, CoSim
from .observers import ObserverGains
from .plant import (
    AssumptionViolation,
    Chirp,
    Constant,
    DriveGains,
    MachineParams,
    Ramp,
    SpeedProfile,
    default_profile,
    profile_from_segments,
)

ALL_VARIANTS = VARIANTS + ("reduced", "reduced-hybrid")


class ConfigError(ValueError):
    """Invalid scenario; the message names the offending field."""


@dataclass(frozen=True)
class ProfileConfig:
    kind: str = "default"  # default | constant | segments
    sign: float = 1.0
    speed: float = 1.0  # per-unit, for kind = "constant"
    duration: float = 2.0
    segments: tuple[dict, ...] = ()
    w_min: float = 0.1  # per-unit
    w_max: float | None = None
    max_accel: float | None = None  # rad/s^2


@dataclass(frozen=True)
class ObserverConfig:
    kp: float = 2.18e4
    ki: float = 9.34e3
    k_eta: float = 95.7
    gamma: float = 4582.0
    rate: float = 200.0
    window: int = 2
    sat_lo: float = 0.5  # x nominal flux
    sat_hi: float = 2.0
    speed_includes_k_eta: bool = False
    floor: float = 1e-12
    identifier_source: str = "observer"


@dataclass(frozen=True)
class DriveConfig:
    bandwidth: float = 2.0 * math.pi * 400.0
    u_max: float = 24.0
    i_ref: tuple[float, float] = (0.0, 2.0)


@dataclass(frozen=True)
class InitialConfig:
    rotor_angle: float = 0.0
    misalignment: float = math.pi
    xi_hat: float = 0.2  # per-unit of the true |xi|, signed by the profile sign
    h_hat: str = "exact"
    i_s: tuple[float, float] = (0.0, 0.0)
    rho: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    variant: str = "hybrid"
    variants: tuple[str, ...] = ("continuous", "hybrid", "hybrid+identifier")
    horizon: float = 2.0
    step: float = 1e-6
    downsample: int = 100
    seed: int = 0


@dataclass(frozen=True)
class PortraitConfig:
    chi: float = 1.0
    k_eta: float = 1.5
    gamma: float = 1.0
    rate: float = 1.0
    theta_points: int = 12
    xi_points: int = 9
    xi_range: float = 3.0
    horizon: float = 40.0
    step: float = 0.01
    manifold_offset: float = 1e-6
    manifold_horizon: float = 60.0
    manifold_margin: float = 0.1


@dataclass(frozen=True)
class SweepConfig:
    eps_factors: tuple[float, ...] = (1.0, 1.0 / 3.0, 0.1)
    samples: int = 4
    misalignment_max: float = math.pi
    xi_hat_range: tuple[float, float] = (0.2, 2.0)  # per-unit
    delta_fast: float = 0.2  # relative to the largest initial |x_f|
    delta_slow: float = 0.05
    horizon: float = 0.15
    step_per_eps: float = 0.05
    workers: int = 1


@dataclass(frozen=True)
class Scenario:
    machine: MachineParams = field(default_factory=MachineParams)
    profile: ProfileConfig = field(default_factory=ProfileConfig)
    observer: ObserverConfig = field(default_factory=ObserverConfig)
    drive: DriveConfig = field(default_factory=DriveConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    run: RunConfig = field(default_factory=RunConfig)
    portrait: PortraitConfig = field(default_factory=PortraitConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    # -- builders ------------------------------------------------------------

    def speed_profile(self) -> SpeedProfile:
        return build_profile(self.profile, self.machine)

    def gains(self) -> ObserverGains:
        o = self.observer
        return ObserverGains(kp=o.kp, ki=o.ki, k_eta=o.k_eta, gamma=o.gamma, rate=o.rate, window=o.window)

    def cosim(self, variant: str | None = None) -> CoSim:
        v = variant or self.run.variant
        o = self.observer
        phi = self.machine.phi
        return CoSim(
            params=self.machine,
            gains=self.gains(),
            profile=self.speed_profile(),
            drive=DriveGains(self.drive.bandwidth, self.drive.u_max, tuple(self.drive.i_ref)),
            variant=v,
            identifier_source=o.identifier_source,
            floor=o.floor,
            sat=(o.sat_lo * phi, o.sat_hi * phi),
        )

    def xi_hat0(self) -> float:
        return self.initial.xi_hat * math.copysign(1.0, self.profile.sign) / self.machine.phi

    def flat(self) -> list[tuple[str, Any]]:
        """``(section.key, value)`` for every setting, for provenance headers."""
        out = []
        for f in fields(self):
            sec = getattr(self, f.name)
            for k, v in asdict(sec).items():
                out.append((f"{f.name}.{k}", v))
        return out


def build_profile(p: ProfileConfig, machine: MachineParams) -> SpeedProfile:
    nom = machine.nominal_speed
    sgn = math.copysign(1.0, p.sign)
    w_max = None if p.w_max is None else p.w_max * nom
    if p.kind == "default":
        prof = default_profile(machine, sgn)
        return SpeedProfile(prof.segments, w_min=p.w_min * nom, w_max=w_max or prof.w_max,
                            max_accel=p.max_accel if p.max_accel is not None else prof.max_accel)
    if p.kind == "constant":
        segs = (Constant(p.duration, sgn * p.speed * nom),)
    elif p.kind == "segments":
        segs = tuple(_segment(k, s, nom, sgn) for k, s in enumerate(p.segments))
    else:
        raise ConfigError(f"profile.kind: unknown kind {p.kind!r} (default | constant | segments)")
    return profile_from_segments(segs, nom, w_min=p.w_min * nom, w_max=w_max, max_accel=p.max_accel)


def _segment(k: int, s: dict, nom: float, sgn: float):
    def speed(key):
        if key + "_rad_s" in s:
            return float(s[key + "_rad_s"])
        if key in s:
            return sgn * float(s[key]) * nom
        raise ConfigError(f"profile.segments[{k}]: missing '{key}'")

    kind = s.get("type")
    try:
        d = float(s["duration"])
    except KeyError:
        raise ConfigError(f"profile.segments[{k}]: missing 'duration'") from None
    if kind == "constant":
        return Constant(d, speed("speed"))
    if kind == "ramp":
        return Ramp(d, speed("start"), speed("end"))
    if kind == "chirp":
        return Chirp(d, speed("mean"), speed("amplitude"), float(s.get("f_start", 1.0)),
                     float(s["f_end"]) if "f_end" in s else None)
    raise ConfigError(f"profile.segments[{k}].type: unknown segment type {kind!r}")


_SECTIONS = {
    "machine": MachineParams,
    "profile": ProfileConfig,
    "observer": ObserverConfig,
    "drive": DriveConfig,
    "initial": InitialConfig,
    "run": RunConfig,
    "portrait": PortraitConfig,
    "sweep": SweepConfig,
}


def _coerce(section: str, cls, raw: dict):
    known = {f.name: f for f in fields(cls)}
    kw = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"{section}.{key}: unknown setting")
        default = getattr(cls(), key) if section != "machine" else getattr(MachineParams(), key)
        if isinstance(value, list):
            value = tuple(dict(v) if isinstance(v, dict) else v for v in value)
        elif isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        kw[key] = value
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def scenario_from_dict(data: dict) -> Scenario:
    kw = {}
    for section, raw in data.items():
        if section not in _SECTIONS:
            raise ConfigError(f"{section}: unknown section")
        if not isinstance(raw, dict):
            raise ConfigError(f"{section}: expected a table")
        kw[section] = _coerce(section, _SECTIONS[section], raw)
    sc = Scenario(**kw)
    validate(sc)
    return sc


def load_scenario(path: str | Path | None) -> Scenario:
    if path is None:
        sc = Scenario()
        validate(sc)
        return sc
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    return scenario_from_dict(data)


def validate(sc: Scenario) -> None:
    """Check every precondition the run will rely on; raise :class:`ConfigError`."""
    r = sc.run
    if r.variant not in ALL_VARIANTS:
        raise ConfigError(f"run.variant: must be one of {ALL_VARIANTS}, got {r.variant!r}")
    for v in r.variants:
        if v not in VARIANTS:
            raise ConfigError(f"run.variants: {v!r} is not an observer variant {VARIANTS}")
    if not r.step > 0:
        raise ConfigError("run.step: must be positive")
    if not r.horizon >= 0:
        raise ConfigError("run.horizon: must be non-negative")
    if r.downsample < 1:
        raise ConfigError("run.downsample: must be >= 1")
    try:
        sc.speed_profile()
    except AssumptionViolation as exc:
        raise ConfigError(f"profile: {exc}") from exc
    try:
        sc.gains()
    except ValueError as exc:
        raise ConfigError(f"observer: {exc}") from exc
    o = sc.observer
    if not 0 < o.sat_lo < o.sat_hi:
        raise ConfigError("observer.sat_lo/sat_hi: need 0 < sat_lo < sat_hi")
    if o.identifier_source not in ("observer", "exact"):
        raise ConfigError("observer.identifier_source: must be 'observer' or 'exact'")
    i = sc.initial
    if not 0.0 <= i.rho <= 1.0:
        raise ConfigError("initial.rho: must lie in [0, 1]")
    if i.h_hat not in ("exact", "zero"):
        raise ConfigError("initial.h_hat: must be 'exact' or 'zero'")
    p = sc.portrait
    for name in ("chi", "k_eta", "gamma", "rate", "step", "horizon"):
        if not getattr(p, name) > 0:
            raise ConfigError(f"portrait.{name}: must be positive")
    s = sc.sweep
    if not s.eps_factors or any(not e > 0 for e in s.eps_factors):
        raise ConfigError("sweep.eps_factors: need positive factors")
    if s.samples < 1 or s.workers < 1:
        raise ConfigError("sweep.samples/workers: must be >= 1")


def dump_toml(sc: Scenario) -> str:
    """Resolved scenario as TOML (flat sections, inline tables for segments)."""
    lines = []
    for f in fields(sc):
        lines.append(f"[{f.name}]")
        for k, v in asdict(getattr(sc, f.name)).items():
            if v is None:
                continue
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    return "\n".join(lines)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, dict):
        return "{ " + ", ".join(f"{k} = {_toml_value(x)}" for k, x in v.items()) + " }"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot encode {v!r}")
