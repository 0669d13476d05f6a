"""Fixed-step simulation of hybrid systems  x' = f(x) on C,  x+ = g(x) on D.

Flows are integrated with classical RK4 on a fixed grid ``t0 + k*step``.
When the guard becomes true at the end of a step, the crossing instant is
bracketed by bisection on a cubic Hermite interpolant of the step, confirmed
by re-integrating to the bracket end, and the jump map is applied there. The
remainder of the interrupted step is then integrated so the grid stays
aligned. A jump falling within ``END_EVENT_REL_TOL * step`` after the horizon
is kept, so a clock that fires exactly at the final time is not lost to
rounding.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence

import numpy as np

FlowMap = Callable[[float, np.ndarray, Any], np.ndarray]
JumpMap = Callable[[float, np.ndarray, Any], np.ndarray]
Guard = Callable[[np.ndarray], bool]
Inputs = Callable[[float], Any]

DEFAULT_MAX_JUMPS = 1_000_000
BISECTION_REL_TOL = 1e-9
# events due within this fraction of a step past the horizon still belong to the arc
END_EVENT_REL_TOL = 1e-6


class SimulationError(RuntimeError):
    """Base class for failures raised by :func:`simulate`."""

    def __init__(self, message: str, t: float, j: int, arc: "HybridArc | None" = None):
        super().__init__(message)
        self.t = t
        self.j = j
        self.arc = arc


class DivergenceError(SimulationError):
    """Non-finite state during flow. ``t, j`` is the last valid hybrid time."""


class ZenoError(SimulationError):
    """The jump budget was exhausted."""


class DomainError(KeyError):
    pass


@dataclass(frozen=True)
class HybridSystem:
    """Data of a hybrid system.

    ``flow(t, x, u)`` and ``jump(t, x, u)`` receive ``u = inputs(t)`` (or
    ``None``). ``guard(x)`` tests membership of the jump set. ``project`` is
    applied after every flow step, e.g. to renormalize S^1 components.
    """

    flow: FlowMap
    jump: JumpMap
    guard: Guard
    names: tuple[str, ...]
    project: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def dim(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class Segment:
    j: int
    t: np.ndarray
    x: np.ndarray

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])


@dataclass(frozen=True)
class JumpRecord:
    t: float
    j: int  # jump count before the jump
    pre: np.ndarray
    post: np.ndarray


@dataclass(frozen=True)
class HybridArc:
    names: tuple[str, ...]
    segments: tuple[Segment, ...]
    jumps: tuple[JumpRecord, ...]

    @property
    def t_final(self) -> float:
        return self.segments[-1].t_end

    @property
    def j_final(self) -> int:
        return self.segments[-1].j

    @property
    def final_state(self) -> np.ndarray:
        return self.segments[-1].x[-1]

    def column(self, name: str) -> np.ndarray:
        """All samples of one component, concatenated over segments."""
        k = self.names.index(name)
        return np.concatenate([seg.x[:, k] for seg in self.segments])

    def times(self) -> np.ndarray:
        return np.concatenate([seg.t for seg in self.segments])

    def jump_counts(self) -> np.ndarray:
        return np.concatenate([np.full(len(seg.t), seg.j) for seg in self.segments])

    def states(self) -> np.ndarray:
        return np.concatenate([seg.x for seg in self.segments], axis=0)

    def segment(self, j: int) -> Segment:
        for seg in self.segments:
            if seg.j == j:
                return seg
        raise DomainError(f"arc has no segment with jump count {j}")


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class _ArcBuilder:
    def __init__(self, names: tuple[str, ...]):
        self.names = names
        self.segments: list[Segment] = []
        self.jumps: list[JumpRecord] = []
        self._t: list[float] = []
        self._x: list[np.ndarray] = []
        self.j = 0

    def sample(self, t: float, x: np.ndarray) -> None:
        self._t.append(t)
        self._x.append(x.copy())

    def close_segment(self) -> None:
        self.segments.append(
            Segment(self.j, _freeze(np.array(self._t)), _freeze(np.array(self._x).reshape(len(self._t), -1)))
        )
        self._t, self._x = [], []

    def jump(self, t: float, pre: np.ndarray, post: np.ndarray) -> None:
        self.close_segment()
        self.jumps.append(JumpRecord(t, self.j, _freeze(pre.copy()), _freeze(post.copy())))
        self.j += 1
        self.sample(t, post)

    def build(self) -> HybridArc:
        if self._t:
            self.close_segment()
        return HybridArc(self.names, tuple(self.segments), tuple(self.jumps))


def rk4_step(flow: FlowMap, inputs: Inputs | None, t: float, x: np.ndarray, h: float,
             k1: np.ndarray | None = None) -> np.ndarray:
    u = inputs if inputs is not None else (lambda _t: None)
    if k1 is None:
        k1 = flow(t, x, u(t))
    th = t + 0.5 * h
    k2 = flow(th, x + (0.5 * h) * k1, u(th))
    k3 = flow(th, x + (0.5 * h) * k2, u(th))
    k4 = flow(t + h, x + h * k3, u(t + h))
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _hermite(x0, f0, x1, f1, h, tau):
    s = tau / h
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * x0 + h10 * h * f0 + h01 * x1 + h11 * h * f1


def simulate(
    system: HybridSystem,
    x0: Sequence[float],
    inputs: Inputs | None = None,
    horizon: float = 1.0,
    step: float = 1e-6,
    *,
    t0: float = 0.0,
    max_jumps: int = DEFAULT_MAX_JUMPS,
    record_every: int = 1,
) -> HybridArc:
    """Integrate ``system`` from ``x0`` over ``[t0, t0 + horizon]``.

    ``record_every`` keeps one flow sample in ``k`` (segment end points and
    jump states are always kept). A zero horizon returns the single initial
    sample.
    """
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    if not horizon >= 0:
        raise ValueError(f"horizon must be non-negative, got {horizon}")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    x = np.array(x0, dtype=float)
    if x.shape != (system.dim,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({system.dim},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")

    u = inputs if inputs is not None else (lambda _t: None)
    flow, project, guard = system.flow, system.project, system.guard
    arc = _ArcBuilder(system.names)
    t = t0
    t_end = t0 + horizon
    arc.sample(t, x)

    def do_jumps(t: float, x: np.ndarray) -> np.ndarray:
        while guard(x):
            if len(arc.jumps) >= max_jumps:
                raise ZenoError(f"more than {max_jumps} jumps by t={t}", t, arc.j, arc.build())
            post = np.asarray(system.jump(t, x, u(t)), dtype=float)
            arc.jump(t, x, post)
            x = post
        return x

    x = do_jumps(t, x)
    n_steps = int(math.ceil(horizon / step - 1e-9)) if horizon > 0 else 0
    since_record = 0
    for k in range(1, n_steps + 1):
        t_next = min(t0 + k * step, t_end)
        while t < t_next:
            h = t_next - t
            k1 = flow(t, x, u(t))
            x1 = rk4_step(flow, inputs, t, x, h, k1)
            if project is not None:
                x1 = project(x1)
            if not np.all(np.isfinite(x1)):
                raise DivergenceError(f"non-finite state after t={t}", t, arc.j, arc.build())
            if not guard(x1):
                t, x = t_next, x1
                break
            tau = _locate(flow, inputs, project, guard, t, x, x1, k1, h)
            x_hit = rk4_step(flow, inputs, t, x, tau, k1)
            if project is not None:
                x_hit = project(x_hit)
            t = t + tau
            arc.sample(t, x_hit)
            since_record = 0
            x = do_jumps(t, x_hit)
        since_record += 1
        if since_record >= record_every or k == n_steps:
            arc.sample(t, x)
            since_record = 0
    if n_steps and not guard(x):
        h = step * END_EVENT_REL_TOL
        k1 = flow(t, x, u(t))
        x1 = rk4_step(flow, inputs, t, x, h, k1)
        if project is not None:
            x1 = project(x1)
        if np.all(np.isfinite(x1)) and guard(x1):
            tau = _locate(flow, inputs, project, guard, t, x, x1, k1, h)
            x_hit = rk4_step(flow, inputs, t, x, tau, k1)
            if project is not None:
                x_hit = project(x_hit)
            t = t + tau
            arc.sample(t, x_hit)
            do_jumps(t, x_hit)
    return arc.build()


def _locate(flow, inputs, project, guard, t, x, x1, k1, h) -> float:
    """Smallest confirmed ``tau`` in (0, h] with the guard true, up to ``h * BISECTION_REL_TOL``."""
    u = inputs if inputs is not None else (lambda _t: None)
    tol = h * BISECTION_REL_TOL
    f1 = flow(t + h, x1, u(t + h))
    lo, hi = 0.0, h
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if guard(_hermite(x, k1, x1, f1, h, mid)):
            hi = mid
        else:
            lo = mid

    def integrate(tau):
        y = rk4_step(flow, inputs, t, x, tau, k1)
        return project(y) if project is not None else y

    if guard(integrate(hi)):
        return hi
    # interpolant disagreed with the integrator: bisect on re-integration
    lo, hi = hi, h
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if guard(integrate(mid)):
            hi = mid
        else:
            lo = mid
    return hi


def arc_query(arc: HybridArc, t: float, j: int) -> np.ndarray:
    """State at hybrid time ``(t, j)``, linearly interpolated within the segment."""
    seg = arc.segment(j)
    tol = 1e-12 * max(1.0, abs(seg.t_end))
    if t < seg.t_start - tol or t > seg.t_end + tol:
        raise DomainError(f"({t}, {j}) outside arc domain [{seg.t_start}, {seg.t_end}] x {{{j}}}")
    ts = seg.t
    if len(ts) == 1:
        return seg.x[0].copy()
    i = int(np.searchsorted(ts, t, side="right")) - 1
    i = min(max(i, 0), len(ts) - 2)
    t_a, t_b = ts[i], ts[i + 1]
    if t_b == t_a:
        return seg.x[i + 1].copy()
    w = (t - t_a) / (t_b - t_a)
    if w <= 0.0:
        return seg.x[i].copy()
    if w >= 1.0:
        return seg.x[i + 1].copy()
    return (1.0 - w) * seg.x[i] + w * seg.x[i + 1]


def arc_rows(arc: HybridArc, extra: Callable[[float, int, np.ndarray], Sequence[float]] | None = None):
    """Yield ``(t, j, event, state...)`` rows; jump states appear as pre/post pairs."""
    last = len(arc.segments) - 1
    for si, seg in enumerate(arc.segments):
        n = len(seg.t)
        for i in range(n):
            if i == 0 and si > 0:
                event = "post"
            elif i == n - 1 and si < last:
                event = "pre"
            else:
                event = "flow"
            row = [float(seg.t[i]), seg.j, event, *map(float, seg.x[i])]
            if extra is not None:
                row.extend(extra(float(seg.t[i]), seg.j, seg.x[i]))
            yield row


def write_arc_csv(arc: HybridArc, path, extra_names: Iterable[str] = (),
                  extra: Callable[[float, int, np.ndarray], Sequence[float]] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "j", "event", *arc.names, *extra_names])
        for row in arc_rows(arc, extra):
            w.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])


# -- clock -------------------------------------------------------------------


@dataclass(frozen=True)
class Clock:
    """Periodic timer: rho' = rate on [0, 1], rho+ = 0 at rho = 1."""

    rate: float
    rho: float = 0.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("clock rate must be positive")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("clock state must lie in [0, 1]")

    @property
    def period(self) -> float:
        return 1.0 / self.rate


def clock_system(rate: float) -> HybridSystem:
    rate = float(rate)
    return HybridSystem(
        flow=lambda t, x, u: np.array([rate]),
        jump=lambda t, x, u: np.array([0.0]),
        guard=lambda x: x[0] >= 1.0,
        names=("rho",),
    )

