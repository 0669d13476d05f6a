"""Command-line scenario runner.

Subcommands ``run``, ``compare``, ``portrait``, ``sweep`` and ``validate``
share the flags ``--config PATH``, ``--out DIR``, ``--seed N`` and
``--downsample K``. Exit codes: 0 success, 1 invalid scenario, 2 the
simulation diverged (partial output is still written).

Every CSV starts with ``#``-prefixed lines echoing the fully resolved
scenario, followed by one header row; column orders are fixed by the
``*_COLUMNS`` constants below.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import identifier as ident
from .analysis import (
    compare_observers,
    convergence_report,
    matrosov_eval,
    semiglobal_sweep,
)
from .circle import from_angle, wrap_angle
from .config import ConfigError, Scenario, load_scenario
from .cosim import PLANT_NAMES, CoSim, sample_errors
from .hybrid import HybridArc, SimulationError, arc_rows, simulate
from .observers import physical_estimates, reduced_hybrid_system, reduced_system
from .plant import chi_quantities
from .portrait import (
    PORTRAIT_COLUMNS,
    PortraitSetup,
    portrait_rows,
    portrait_runs,
    separatrix_return_distance,
    trace_separatrix,
)

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2

COSIM_EXTRA = ("theta_t", "eta1", "eta2", "xi_t", "x_f_norm", "W1", "W2", "W3", "W4", "sigma_s",
               "chi", "w", "w_hat", "theta", "theta_hat", "phi_hat")
REDUCED_EXTRA = ("theta_t", "W1", "W2", "W3", "W4", "sigma_s", "chi")
JUMP_COLUMNS = ("t", "j", "theta_t_pre", "theta_t_post", "eta1_pre", "eta1_post", "xi_hat_pre",
                "xi_hat_post", "xi_star", "xi_star_degenerate", "x_f_norm_pre", "x_f_norm_post")
COMPARE_COLUMNS = ("rank", "variant", "t_w_5pct", "t_xi_5pct", "peak_h_tilde", "peak_x_f", "jumps",
                   "sigma_s_final", "first_xi_reset_t")
SWEEP_COLUMNS = ("eps", "runs", "fast_violations", "slow_violations", "worst_fast_excess",
                 "worst_sigma_final", "passed")


# -- output helpers ----------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".15g")
    return str(v)


def _header(sc: Scenario) -> list[str]:
    return [f"# {k} = {v!r}" for k, v in sc.flat()]


def write_csv(path: Path, sc: Scenario, columns: Sequence[str], rows: Iterable[Sequence]) -> int:
    n = 0
    with open(path, "w", newline="") as fh:
        for line in _header(sc):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
            n += 1
    return n


def write_text(path: Path, sc: Scenario, lines: Iterable[str]) -> None:
    with open(path, "w") as fh:
        for line in _header(sc):
            fh.write(line + "\n")
        for line in lines:
            fh.write(line + "\n")


# -- trajectories ------------------------------------------------------------------


def cosim_initial_state(sc: Scenario, cs: CoSim) -> np.ndarray:
    i = sc.initial
    return cs.initial_state(rotor_angle=i.rotor_angle, misalignment=i.misalignment, xi_hat=sc.xi_hat0(),
                            i_s=i.i_s, h_hat=i.h_hat, rho=i.rho)


def cosim_extras(sc: Scenario, cs: CoSim):
    gamma = cs.gains.gamma
    rho_k = cs.index("rho") if cs.hybrid else None
    o = len(PLANT_NAMES)
    lo, hi = cs.saturation
    k_eta = cs.gains.k_eta if sc.observer.speed_includes_k_eta else None

    def extra(t, j, x):
        err, chi, xi, w, est = sample_errors(cs, t, x)
        rho = float(x[rho_k]) if rho_k is not None else 0.0
        m = matrosov_eval(err.eta, err.xi_t, rho, chi, gamma)
        sig = math.sqrt((1.0 - err.eta[0]) ** 2 + err.eta[1] ** 2 + (err.xi_t / abs(xi)) ** 2)
        est = physical_estimates((x[o + 2], x[o + 3]), (x[o + 4], x[o + 5]), x[o + 6], lo, hi, k_eta)
        return (wrap_angle(err.eta.angle), err.eta[0], err.eta[1], err.xi_t, err.fast_norm,
                m.W1, m.W2, m.W3, m.W4, sig, chi, w, est.w, math.atan2(x[3], x[2]),
                est.zeta.angle, est.phi)

    return extra


def jump_log_rows(sc: Scenario, cs: CoSim, arc: HybridArc):
    o = len(PLANT_NAMES)
    k_xi = o + 6
    for rec in arc.jumps:
        a, _, _, _, _ = sample_errors(cs, rec.t, rec.pre)
        b, _, _, _, _ = sample_errors(cs, rec.t, rec.post)
        star, degenerate = float("nan"), ""
        if cs.with_identifier:
            regs = ident.IdentifierRegisters.unpack(rec.pre[cs.index("nu1"):], cs.N)
            if regs.ready:
                sol = ident.solve_xi_star(ident.regression_batch(regs), cs.floor)
                star, degenerate = sol.value, sol.degenerate
        yield (rec.t, rec.j, wrap_angle(a.eta.angle), wrap_angle(b.eta.angle), a.eta[0], b.eta[0],
               rec.pre[k_xi], rec.post[k_xi], star, degenerate, a.fast_norm, b.fast_norm)


def reduced_setup(sc: Scenario):
    """System, inputs ``chi(t)``, initial state and ``|xi|(0)`` for reduced variants."""
    params, prof, g = sc.machine, sc.speed_profile(), sc.gains()
    hybrid = sc.run.variant == "reduced-hybrid"
    system = reduced_hybrid_system(g.k_eta, g.gamma, g.rate) if hybrid else reduced_system(g.k_eta, g.gamma)
    phi = params.phi

    def chi(t):
        return abs(prof(t)[0]) * phi

    eta = from_angle(sc.initial.misalignment)
    if abs(abs(sc.initial.misalignment) - math.pi) < 1e-15:
        eta = (-1.0, 0.0)
    xi = prof.sign / phi
    x0 = [eta[0], eta[1], xi - sc.xi_hat0()] + ([sc.initial.rho] if hybrid else [])
    return system, chi, np.array(x0), abs(xi)


def reduced_extras(sc: Scenario, chi, xi_abs: float, hybrid: bool):
    gamma = sc.observer.gamma

    def extra(t, j, x):
        rho = float(x[3]) if hybrid else 0.0
        c = chi(t)
        m = matrosov_eval((x[0], x[1]), x[2], rho, c, gamma)
        sig = math.sqrt((1.0 - x[0]) ** 2 + x[1] ** 2 + (x[2] / xi_abs) ** 2)
        return (wrap_angle(math.atan2(x[1], x[0])), m.W1, m.W2, m.W3, m.W4, sig, c)

    return extra


def cmd_run(sc: Scenario, out: Path) -> int:
    r = sc.run
    reduced = r.variant in ("reduced", "reduced-hybrid")
    if reduced:
        system, chi, x0, xi_abs = reduced_setup(sc)
        names, extra_names = system.names, REDUCED_EXTRA
        extra = reduced_extras(sc, chi, xi_abs, r.variant == "reduced-hybrid")
        runner = lambda: simulate(system, x0, chi, r.horizon, r.step, record_every=r.downsample)
        cs = None
    else:
        cs = sc.cosim()
        x0 = cosim_initial_state(sc, cs)
        names, extra_names = cs.names, COSIM_EXTRA
        extra = cosim_extras(sc, cs)
        runner = lambda: cs.run(x0, r.horizon, r.step, record_every=r.downsample)
    columns = ("t", "j", "event", *names, *extra_names)
    traj = out / "trajectory.csv"
    if r.horizon == 0.0:
        write_csv(traj, sc, columns, ())
        write_csv(out / "jumps.csv", sc, JUMP_COLUMNS, ())
        write_text(out / "summary.txt", sc, ["status = ok", "samples = 0", "jumps = 0"])
        return EXIT_OK

    status, arc, error = "ok", None, None
    try:
        arc = runner()
    except SimulationError as exc:
        status, arc, error = "diverged", exc.arc, exc
    if arc is not None:
        n = write_csv(traj, sc, columns, arc_rows(arc, extra))
    else:
        n = write_csv(traj, sc, columns, ())
    if arc is not None and cs is not None:
        write_csv(out / "jumps.csv", sc, JUMP_COLUMNS, jump_log_rows(sc, cs, arc))
    elif arc is not None:
        write_csv(out / "jumps.csv", sc, ("t", "j", *("pre_" + k for k in names), *("post_" + k for k in names)),
                  ((rec.t, rec.j, *rec.pre, *rec.post) for rec in arc.jumps))
    lines = [f"status = {status}", f"variant = {r.variant}", f"samples = {n}"]
    if arc is not None:
        lines += [f"t_final = {_fmt(arc.t_final)}", f"jumps = {len(arc.jumps)}"]
    if error is not None:
        lines += [f"error = {type(error).__name__}: {error}", f"error_t = {_fmt(error.t)}", f"error_j = {error.j}"]
    elif cs is not None:
        rep = convergence_report(cs, arc)
        lines += [f"{k} = {_fmt(v)}" for k, v in rep.row().items() if k not in ("variant", "jumps")]
        if rep.first_xi_reset is not None:
            lines.append(f"first_xi_reset_t = {_fmt(rep.first_xi_reset[0])}")
    else:
        e1, e2, xi_t = arc.final_state[:3]
        lines.append(f"sigma_s_final = {_fmt(math.sqrt((1 - e1) ** 2 + e2**2 + (xi_t / xi_abs) ** 2))}")
    write_text(out / "summary.txt", sc, lines)
    if error is not None:
        print(f"diverged at t={error.t:.6g}, j={error.j}: {error}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


# -- comparison --------------------------------------------------------------------


def cmd_compare(sc: Scenario, out: Path) -> int:
    r = sc.run
    base = sc.cosim(r.variants[0])
    try:
        reports = compare_observers(base, lambda cs: cosim_initial_state(sc, cs), r.horizon, r.step,
                                    r.variants, record_every=r.downsample)
    except SimulationError as exc:
        write_text(out / "compare.txt", sc, ["status = diverged", f"error = {exc}"])
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    rows = []
    for k, rep in enumerate(reports, 1):
        reset = rep.first_xi_reset[0] if rep.first_xi_reset else float("nan")
        rows.append((k, rep.variant, rep.t_w, rep.t_xi, rep.peak_h_t, rep.peak_fast, rep.jumps,
                     rep.sigma_final, reset))
    write_csv(out / "compare.csv", sc, COMPARE_COLUMNS, rows)
    widths = [max(len(c), 12) for c in COMPARE_COLUMNS]
    table = ["  ".join(c.rjust(w) for c, w in zip(COMPARE_COLUMNS, widths))]
    for row in rows:
        table.append("  ".join(_fmt(v if not isinstance(v, float) else float(f"{v:.6g}")).rjust(w)
                               for v, w in zip(row, widths)))
    write_text(out / "compare.txt", sc, table)
    print("\n".join(table))
    return EXIT_OK


# -- portrait ----------------------------------------------------------------------


def portrait_setup(sc: Scenario) -> PortraitSetup:
    p = sc.portrait
    return PortraitSetup(**{k: getattr(p, k) for k in PortraitSetup.__dataclass_fields__})


def cmd_portrait(sc: Scenario, out: Path) -> int:
    ps = portrait_setup(sc)
    branches = trace_separatrix(ps)
    flow = portrait_runs(ps, hybrid=False, branches=branches)
    hyb = portrait_runs(ps, hybrid=True, branches=branches)
    every = max(1, sc.run.downsample)
    write_csv(out / "portrait.csv", sc, PORTRAIT_COLUMNS, portrait_rows(flow + hyb, branches, every))
    off = [r.sigma_final for r in flow if not r.near_separatrix]
    lines = [
        f"grid_points = {len(flow)}",
        f"near_separatrix = {sum(r.near_separatrix for r in flow)}",
        f"flow_max_sigma_off_separatrix = {_fmt(max(off) if off else 0.0)}",
        f"hybrid_max_sigma = {_fmt(max(r.sigma_final for r in hyb))}",
        f"separatrix_return_distance = {_fmt(max(separatrix_return_distance(ps, b) for b in branches))}",
    ]
    write_text(out / "portrait_summary.txt", sc, lines)
    print("\n".join(lines))
    return EXIT_OK


# -- sweep -------------------------------------------------------------------------


def sweep_starts(sc: Scenario, seed: int):
    """Initial-state generator for :func:`semiglobal_sweep`.

    The same seeded draw of ``(rotor angle, misalignment, xi_hat, h_hat error)``
    is replayed for every ``eps`` so that rows are paired.
    """
    s = sc.sweep
    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(s.samples):
        draws.append((rng.uniform(-math.pi, math.pi), rng.uniform(-s.misalignment_max, s.misalignment_max),
                      rng.uniform(*s.xi_hat_range), rng.uniform(-0.2, 0.2, size=2)))

    def starts(cs: CoSim):
        w, dw = cs.profile(0.0)
        for rotor, mis, xh, dh in draws:
            q = chi_quantities(w, dw, from_angle(rotor), cs.params)
            eta = from_angle(mis)
            h = (q.chi * eta[1] + dh[0] * q.chi, -q.chi * eta[0] + dh[1] * q.chi)
            yield cs.initial_state(rotor_angle=rotor, misalignment=mis, xi_hat=xh * q.xi, h_hat=h, rho=0.0)

    return starts


def cmd_sweep(sc: Scenario, out: Path) -> int:
    s = sc.sweep
    base = sc.cosim()
    eps0 = base.gains.epsilon(base.params)
    eps_list = [eps0 * f for f in s.eps_factors]
    starts = sweep_starts(sc, sc.run.seed)
    # the fast tolerance is relative to the largest initial fast error of the draw
    x_f0 = max(sample_errors(base, 0.0, x0)[0].fast_norm for x0 in starts(base))
    delta_fast = s.delta_fast * x_f0
    try:
        res = semiglobal_sweep(base, starts, eps_list, delta_fast, s.delta_slow, s.horizon,
                               s.step_per_eps, record_every=max(1, sc.run.downsample // 10), workers=s.workers)
    except SimulationError as exc:
        write_text(out / "sweep.txt", sc, ["status = diverged", f"error = {exc}"])
        return EXIT_DIVERGED
    rows = [(r.eps, r.runs, r.fast_violations, r.slow_violations, r.worst_fast_excess, r.worst_sigma_final,
             r.passed) for r in res.rows]
    write_csv(out / "sweep.csv", sc, SWEEP_COLUMNS, rows)
    lines = [f"delta_fast = {_fmt(delta_fast)}", f"delta_slow = {_fmt(s.delta_slow)}",
             f"eps_star = {_fmt(res.eps_star) if res.eps_star is not None else 'none'}"]
    lines += [" ".join(f"{c}={_fmt(v)}" for c, v in zip(SWEEP_COLUMNS, row)) for row in rows]
    write_text(out / "sweep.txt", sc, lines)
    print("\n".join(lines))
    return EXIT_OK


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="scenario TOML (defaults if omitted)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--seed", type=int, default=None, help="overrides run.seed")
    common.add_argument("--downsample", type=int, default=None, help="overrides run.downsample")
    p = argparse.ArgumentParser(prog="hybrid-pmsm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="simulate one variant, write trajectory/jumps/summary")
    sub.add_parser("compare", parents=[common], help="convergence table across run.variants")
    sub.add_parser("portrait", parents=[common], help="reduced-dynamics phase portrait and separatrix")
    sub.add_parser("sweep", parents=[common], help="two-rate bound checks over decreasing eps")
    sub.add_parser("validate", parents=[common], help="check the scenario and exit")
    return p


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "portrait": cmd_portrait, "sweep": cmd_sweep}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.downsample is not None:
            if args.downsample < 1:
                raise ConfigError("--downsample: must be >= 1")
            overrides["downsample"] = args.downsample
        if overrides:
            sc = replace(sc, run=replace(sc.run, **overrides))
    except ConfigError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.command == "validate":
        print("scenario ok")
        return EXIT_OK
    args.out.mkdir(parents=True, exist_ok=True)
    return COMMANDS[args.command](sc, args.out)


if __name__ == "__main__":
    raise SystemExit(main())
