"""Numerical checks of the stability machinery: Matrosov functions along
reduced hybrid arcs, jump decrease, the fast-subsystem bound, semiglobal
sweeps and observer comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .cosim import CoSim, ErrorTrace, error_trace
from .hybrid import HybridArc, JumpRecord


@dataclass(frozen=True)
class MatrosovValues:
    W1: float
    W2: float
    W3: float
    W4: float


def matrosov_eval(eta: Sequence[float], xi_t: float, rho: float, chi: float, gamma: float) -> MatrosovValues:
    e1, e2 = eta
    return MatrosovValues(
        W1=1.0 - e1 + xi_t * xi_t / (2.0 * gamma),
        W2=-chi * xi_t * e1 * e2,
        W3=math.exp(rho) * (e2 * e2 + xi_t * xi_t),
        W4=math.exp(-rho) * (1.0 - e1),
    )


def W1(eta1, xi_t, gamma):
    """Vectorized ``1 - eta_1 + xi_t^2 / (2 gamma)``."""
    return 1.0 - np.asarray(eta1) + np.asarray(xi_t) ** 2 / (2.0 * gamma)


def sigma_s(eta: Sequence[float], xi_t: float, rho: float = 0.0) -> float:
    """Proper indicator of ``{eta = (1, 0), xi_t = 0} x [0, 1]``."""
    return math.sqrt((1.0 - eta[0]) ** 2 + eta[1] ** 2 + xi_t * xi_t)


def sigma_s_array(eta1, eta2, xi_t) -> np.ndarray:
    return np.sqrt((1.0 - np.asarray(eta1)) ** 2 + np.asarray(eta2) ** 2 + np.asarray(xi_t) ** 2)


# -- flow / jump decrease -------------------------------------------------------


@dataclass
class CheckReport:
    passed: bool
    checked: int
    worst: float
    worst_at: tuple[float, int] | None = None
    details: dict = field(default_factory=dict)


def _five_point(t: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fourth-order central differences at interior samples of a uniform grid."""
    h = t[1] - t[0]
    d = (-y[4:] + 8.0 * y[3:-1] - 8.0 * y[1:-3] + y[:-4]) / (12.0 * h)
    return t[2:-2], d


def check_flow_decrease(arc: HybridArc, k_eta: float, gamma: float, chi: Callable[[float], float],
                        rel_tol: float = 1e-3, abs_floor: float | None = None) -> CheckReport:
    """Finite-difference ``dW1/dt`` against ``-k_eta chi eta_2^2`` on every flow segment.

    The relative error is taken against ``max(|exact|, abs_floor)``; the floor
    (default ``1e-6 k_eta max chi``) only matters where ``eta_2`` crosses zero.
    Only uniformly spaced interior samples are used; segments shorter than 5
    uniform samples are skipped.
    """
    ie1, ie2, ix = arc.names.index("eta1"), arc.names.index("eta2"), arc.names.index("xi_t")
    worst, worst_at, checked = 0.0, None, 0
    max_signed = -math.inf
    for seg in arc.segments:
        t, X = seg.t, seg.x
        # drop the (possibly shorter) final and first steps around jumps
        dt = np.diff(t)
        if len(t) < 7:
            continue
        h = np.median(dt)
        uniform = np.abs(dt - h) <= 1e-9 * h
        # longest run of uniform spacing
        runs, start = [], None
        for k, ok in enumerate(uniform):
            if ok and start is None:
                start = k
            if not ok and start is not None:
                runs.append((start, k))
                start = None
        if start is not None:
            runs.append((start, len(uniform)))
        for a, b in runs:
            if b - a < 4:
                continue
            tt = t[a:b + 1]
            w = W1(X[a:b + 1, ie1], X[a:b + 1, ix], gamma)
            tc, d = _five_point(tt, w)
            mid = slice(a + 2, b - 1)
            chis = np.array([chi(float(s)) for s in tc])
            exact = -k_eta * chis * X[mid, ie2] ** 2
            floor = abs_floor if abs_floor is not None else 1e-6 * k_eta * float(np.max(chis))
            rel = np.abs(d - exact) / np.maximum(np.abs(exact), floor)
            checked += len(rel)
            max_signed = max(max_signed, float(np.max(d)))
            k = int(np.argmax(rel))
            if rel[k] > worst:
                worst, worst_at = float(rel[k]), (float(tc[k]), seg.j)
    passed = bool(worst < rel_tol)
    return CheckReport(passed, checked, worst, worst_at, {"max_dW1": max_signed})


def check_jump_decrease(jumps: Iterable[JumpRecord], names: Sequence[str], gamma: float,
                        atol: float = 1e-12, rho_tol: float = 1e-5) -> CheckReport:
    """Exact jump changes of W1 and W3 on reduced hybrid arcs, plus ``eta_1+ >= 0``
    and a pre-jump clock within ``rho_tol`` of 1."""
    ie1, ie2, ix, ir = (names.index(n) for n in ("eta1", "eta2", "xi_t", "rho"))
    worst, worst_at, n = 0.0, None, 0
    min_eta1 = math.inf
    max_rho_err = 0.0
    for rec in jumps:
        pre, post = rec.pre, rec.post
        e1 = pre[ie1]
        a = matrosov_eval((pre[ie1], pre[ie2]), pre[ix], pre[ir], 1.0, gamma)
        b = matrosov_eval((post[ie1], post[ie2]), post[ix], post[ir], 1.0, gamma)
        dW1_expected = 2.0 * e1 if e1 < 0 else 0.0
        # the clock reaches rho = 1 only up to the event tolerance, so the
        # factor e^0 - e^1 is evaluated at the recorded pre-jump rho
        dW3_expected = (1.0 - math.exp(pre[ir])) * (pre[ie2] ** 2 + pre[ix] ** 2)
        err = max(abs((b.W1 - a.W1) - dW1_expected),
                  abs((b.W3 - a.W3) - dW3_expected) / max(1.0, abs(dW3_expected)))
        err_rho = abs(pre[ir] - 1.0)
        min_eta1 = min(min_eta1, post[ie1])
        n += 1
        if err > worst:
            worst, worst_at = err, (rec.t, rec.j)
        max_rho_err = max(max_rho_err, err_rho)
    passed = bool(worst <= atol and min_eta1 >= 0.0 and max_rho_err <= rho_tol)
    return CheckReport(passed, n, float(worst), worst_at,
                       {"min_post_eta1": float(min_eta1), "max_rho_err": float(max_rho_err)})


def check_fast_jumps(cs: CoSim, arc: HybridArc, rtol: float = 1e-12) -> CheckReport:
    """``|x_f|`` is unchanged by every co-simulation jump (relative to ``rtol``)."""
    from .cosim import sample_errors

    worst, worst_at = 0.0, None
    for rec in arc.jumps:
        a = sample_errors(cs, rec.t, rec.pre)[0].fast_norm
        b = sample_errors(cs, rec.t, rec.post)[0].fast_norm
        err = abs(b - a) / max(a, 1e-300)
        if err > worst:
            worst, worst_at = err, (rec.t, rec.j)
    return CheckReport(bool(worst <= rtol), len(arc.jumps), float(worst), worst_at)


def jump_deltas(rec: JumpRecord, names: Sequence[str], gamma: float) -> tuple[float, float]:
    """``(W1+ - W1, W3+ - W3)`` across one jump of a reduced hybrid arc."""
    ie1, ie2, ix, ir = (names.index(n) for n in ("eta1", "eta2", "xi_t", "rho"))
    a = matrosov_eval((rec.pre[ie1], rec.pre[ie2]), rec.pre[ix], rec.pre[ir], 1.0, gamma)
    b = matrosov_eval((rec.post[ie1], rec.post[ie2]), rec.post[ix], rec.post[ir], 1.0, gamma)
    return b.W1 - a.W1, b.W3 - a.W3


# -- convergence metrics ----------------------------------------------------------


def time_to_threshold(t: np.ndarray, signal: np.ndarray, threshold: float) -> float:
    """First time after which ``|signal| <= threshold`` for the rest of the record.

    ``inf`` if the last sample is above the threshold.
    """
    above = np.nonzero(np.abs(signal) > threshold)[0]
    if len(above) == 0:
        return float(t[0])
    k = above[-1]
    if k + 1 >= len(t):
        return math.inf
    return float(t[k + 1])


def fit_decay_rate(t: np.ndarray, norm: np.ndarray, floor: float = 0.0) -> float:
    """Least-squares slope of ``-log |x|`` over samples above ``floor``."""
    mask = norm > max(floor, 1e-300)
    tt, yy = t[mask], np.log(norm[mask])
    A = np.vstack([tt, np.ones_like(tt)]).T
    slope = np.linalg.lstsq(A, yy, rcond=None)[0][0]
    return float(-slope)


@dataclass
class ConvergenceReport:
    variant: str
    t_w: float  # time to 5% speed error
    t_xi: float  # time to 5% flux-parameter error
    peak_h_t: float
    peak_fast: float
    jumps: int
    sigma_final: float
    first_xi_reset: tuple[float, int] | None = None

    def row(self) -> dict:
        return {
            "variant": self.variant,
            "t_w_5pct": self.t_w,
            "t_xi_5pct": self.t_xi,
            "peak_h_tilde": self.peak_h_t,
            "peak_x_f": self.peak_fast,
            "jumps": self.jumps,
            "sigma_s_final": self.sigma_final,
        }


def convergence_report(cs: CoSim, arc: HybridArc, trace: ErrorTrace | None = None,
                       level: float = 0.05) -> ConvergenceReport:
    tr = trace if trace is not None else error_trace(cs, arc)
    t_w = time_to_threshold(tr.t, (tr.w_hat - tr.w) / np.abs(tr.w), level)
    t_xi = time_to_threshold(tr.t, tr.xi_t / np.abs(tr.xi), level)
    first = None
    if cs.with_identifier:
        k = cs.index("xi_hat")
        for rec in arc.jumps:
            if rec.post[k] != rec.pre[k]:
                first = (rec.t, rec.j)
                break
    sig = sigma_s_array(tr.eta1[-1], tr.eta2[-1], tr.xi_t[-1] / np.abs(tr.xi[-1]))
    return ConvergenceReport(
        variant=cs.variant,
        t_w=t_w,
        t_xi=t_xi,
        peak_h_t=float(np.max(tr.h_t_norm)),
        peak_fast=float(np.max(tr.fast_norm)),
        jumps=len(arc.jumps),
        sigma_final=float(sig),
        first_xi_reset=first,
    )


def compare_observers(base: CoSim, x0_for: Callable[[CoSim], np.ndarray], horizon: float, step: float,
                      variants: Sequence[str] = ("continuous", "hybrid", "hybrid+identifier"),
                      record_every: int = 10) -> list[ConvergenceReport]:
    """Run each variant with identical gains from the same physical start,
    ordered by time-to-5% of the flux-parameter error."""
    from dataclasses import replace

    reports = []
    for v in variants:
        cs = replace(base, variant=v)
        arc = cs.run(x0_for(cs), horizon, step, record_every=record_every)
        reports.append(convergence_report(cs, arc))
    return sorted(reports, key=lambda r: (r.t_xi, r.variant))


# -- semiglobal sweep ---------------------------------------------------------------


@dataclass
class SweepRow:
    eps: float
    runs: int
    fast_violations: int
    slow_violations: int
    worst_fast_excess: float
    worst_sigma_final: float

    @property
    def passed(self) -> bool:
        return self.fast_violations == 0 and self.slow_violations == 0


@dataclass
class SweepResult:
    rows: list[SweepRow]
    eps_star: float | None  # smallest passing eps in the list (None if none passes)

    @property
    def passed(self) -> bool:
        return self.eps_star is not None


def check_two_rate_bounds(cs: CoSim, arc: HybridArc, delta_fast: float, delta_slow: float,
                         overshoot: float = 4.0, settle_fraction: float = 0.5):
    """Evaluate both bounds on one arc.

    Fast: ``|x_f(t)| <= exp(-t/eps)|x_f(0)| + delta_fast`` at every sample.
    Slow (checkable form): ``sigma_s <= overshoot * sigma_s(0) + delta_slow``
    throughout, and ``sigma_s <= delta_slow`` over the last
    ``1 - settle_fraction`` of the horizon. ``sigma_s`` uses the flux error
    relative to ``|xi|``.
    Returns ``(fast_ok, slow_ok, fast_excess, sigma_final)``.
    """
    tr = error_trace(cs, arc)
    eps = cs.gains.epsilon(cs.params)
    bound = np.exp(-(tr.t - tr.t[0]) / eps) * tr.fast_norm[0] + delta_fast
    excess = float(np.max(tr.fast_norm - bound))
    sig = sigma_s_array(tr.eta1, tr.eta2, tr.xi_t / np.abs(tr.xi))
    t_rel = (tr.t - tr.t[0]) / (tr.t[-1] - tr.t[0])
    late = t_rel >= settle_fraction
    slow_ok = bool(np.all(sig <= overshoot * sig[0] + delta_slow) and np.all(sig[late] <= delta_slow))
    return excess <= 0.0, slow_ok, excess, float(sig[-1])


def semiglobal_sweep(base: CoSim, initial_states: Callable[[CoSim], Iterable[np.ndarray]],
                     eps_list: Sequence[float], delta_fast: float, delta_slow: float,
                     horizon: float, step_per_eps: float = 0.05, record_every: int = 5,
                     workers: int = 1) -> SweepResult:
    """Re-tune the fast gains for each ``eps`` and test both bounds on every start.

    ``initial_states(cs)`` yields co-simulation states for the re-tuned setup
    (with ``rho = 0``). The integration step is ``step_per_eps * eps``. Runs
    are independent and are spread over ``workers`` threads; results are
    collected in input order so the table does not depend on scheduling.
    """
    from concurrent.futures import ThreadPoolExecutor
    from dataclasses import replace

    rows = []
    for eps in eps_list:
        cs = replace(base, gains=base.gains.with_epsilon(eps, base.params))
        step = step_per_eps * eps
        starts = list(initial_states(cs))
        for x0 in starts:
            if cs.hybrid and x0[cs.index("rho")] != 0.0:
                raise ValueError("semiglobal sweep requires rho0 = 0")

        def one(x0, cs=cs, step=step):
            arc = cs.run(x0, horizon, step, record_every=record_every)
            return check_two_rate_bounds(cs, arc, delta_fast, delta_slow)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(one, starts))
        else:
            results = [one(x0) for x0 in starts]
        fv = sum(not r[0] for r in results)
        sv = sum(not r[1] for r in results)
        worst_excess = max((r[2] for r in results), default=-math.inf)
        worst_sig = max((r[3] for r in results), default=0.0)
        rows.append(SweepRow(eps, len(results), fv, sv, worst_excess, worst_sig))
    passing = [r.eps for r in rows if r.passed]
    return SweepResult(rows, min(passing) if passing else None)
