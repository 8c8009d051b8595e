"""Command line interface.

All subcommands read a YAML model config, print a JSON document to
stdout, and write a short human-readable summary to stderr. Commands
that accept ``--out`` additionally write delimited output; the sweep
report also renders a figure next to the CSV.

Exit codes: 0 success, 2 config/schema error, 3 unstable model,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys

from .config import ConfigError, parse_config
from .ergodicity import check_ergodicity
from .measures import PerformanceReport, compute_report, sweep
from .nsga2 import CSV_COLUMNS, candidate_row, optimize
from .simulate import simulate
from .solver import NumericalFailure, UnstableConfigError, solve_stationary

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3
EXIT_NUMERICAL = 4

DEFAULT_SEED = 20240513


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, sort_keys=True, indent=2)
    sys.stdout.write("\n")


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    return f"{v:.12g}" if isinstance(v, float) else str(v)


def cmd_validate(args) -> int:
    cfg = parse_config(args.config)
    _emit({"valid": True, "S": cfg.S, "K": cfg.K, "K1": cfg.K1,
           "K2": cfg.K2, "M": cfg.M})
    _say(f"config {args.config} is valid (S={cfg.S}, K={cfg.K}, "
         f"K1={cfg.K1}, K2={cfg.K2}, M={cfg.M})")
    return EXIT_OK


def cmd_stability(args) -> int:
    cfg = parse_config(args.config)
    rep = check_ergodicity(cfg)
    _emit({"stable": rep.stable, "up_drift": rep.up_drift,
           "down_drift": rep.down_drift, "reduced_lhs": rep.reduced_lhs,
           "margin": rep.margin})
    _say(str(rep))
    return EXIT_OK if rep.stable else EXIT_UNSTABLE


def cmd_solve(args) -> int:
    cfg = parse_config(args.config)
    z = solve_stationary(cfg)
    masses = [float(m) for m in z.level_masses()]
    out = {"i_star": z.i_star, "residual": z.residual,
           "total_mass": z.total_mass(), "level_masses": masses[:20]}
    if args.dump_dist:
        rows = [[l, _fmt(m)] for l, m in enumerate(masses)]
        _write_csv(args.dump_dist, ["level", "probability"], rows)
        out["dump"] = args.dump_dist
    _emit(out)
    _say(f"solved: {z.i_star + 1} orbit levels, residual {z.residual:.3e}")
    return EXIT_OK


def _report_json(rep: PerformanceReport) -> dict:
    return {k: v for k, v in rep.as_dict().items()}


def cmd_measures(args) -> int:
    cfg = parse_config(args.config)
    z = solve_stationary(cfg)
    rep = compute_report(cfg, z)
    _emit(_report_json(rep))
    if args.out:
        names = list(PerformanceReport.SCALAR_FIELDS)
        _write_csv(args.out, names, [[_fmt(rep.scalars()[n]) for n in names]])
        _say(f"wrote {args.out}")
    _say(f"E[orbit]={rep.e_orbit:.4g}  P(drop handoff)={rep.p_drop_handoff:.4g}  "
         f"P(repair)={rep.p_repair:.4g}")
    return EXIT_OK


_PLOT_MEASURES = ("p_drop_handoff", "p_preempt_new", "p_block_emergency",
                  "e_orbit")


def _render_sweep_plot(path: str, param: str, rows) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    good = [r for r in rows if r.report is not None]
    xs = [r.value for r in good]
    for ax, name in zip(axes.flat, _PLOT_MEASURES):
        ax.plot(xs, [r.report.scalars()[name] for r in good], marker="o")
        ax.set_xlabel(param)
        ax.set_ylabel(name)
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    try:
        values = [float(v) for v in args.values.split(",")]
    except ValueError:
        raise ConfigError([f"cannot parse --values {args.values!r}"])
    rows = sweep(cfg, args.param, values)
    names = list(PerformanceReport.SCALAR_FIELDS)
    out_rows = []
    for r in rows:
        rec = {"value": r.value, "stable": r.stable,
               "error": r.error,
               "measures": r.report.as_dict() if r.report else None}
        out_rows.append(rec)
    _emit({"param": args.param, "rows": out_rows})
    if args.out:
        csv_rows = []
        for r in rows:
            sc = r.report.scalars() if r.report else {}
            csv_rows.append([_fmt(r.value), int(r.stable)]
                            + [_fmt(sc[n]) if sc else "" for n in names])
        _write_csv(args.out, ["value", "stable"] + names, csv_rows)
        _say(f"wrote {args.out}")
        if not args.no_plot:
            png = args.out.rsplit(".", 1)[0] + ".png"
            _render_sweep_plot(png, args.param, rows)
            _say(f"wrote {png}")
    n_ok = sum(r.stable for r in rows)
    _say(f"sweep over {args.param}: {n_ok}/{len(rows)} stable points")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    est = simulate(cfg, events=args.events, seed=args.seed)
    _emit({k: {"mean": v.mean, "se": v.se} for k, v in est.items()})
    if args.out:
        rows = [[k, _fmt(v.mean), _fmt(v.se)] for k, v in est.items()]
        _write_csv(args.out, ["measure", "mean", "se"], rows)
        _say(f"wrote {args.out}")
    _say(f"simulated {args.events} events (seed {args.seed})")
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = parse_config(args.config)
    if cfg.nsga2 is None:
        raise ConfigError(["config has no nsga2 section; add one to use "
                           "the optimize command"])
    res = optimize(cfg)
    front = [candidate_row(c) for c in res.front]
    best = candidate_row(res.best) if res.best else None
    _emit({"front": front, "best": best, "evaluations": res.evaluations,
           "cache_hits": res.cache_hits})
    if args.out:
        rows = [[_fmt(r[c]) for c in CSV_COLUMNS] for r in front]
        _write_csv(args.out, list(CSV_COLUMNS), rows)
        _say(f"wrote {args.out}")
    for line in res.log[-3:]:
        _say(line)
    if best:
        _say(f"best design: K={best['K']} K1={best['K1']} "
             f"lambda_E={best['lambda_E']:.4g} mu_E={best['mu_E']:.4g}")
    else:
        _say("no feasible design found")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="retrialq",
                                description="retrial queue solver toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="path to YAML model config")
        sp.set_defaults(fn=fn)
        return sp

    add("validate", cmd_validate, "check a config and report its shape")
    add("stability", cmd_stability, "run the ergodicity test")
    sp = add("solve", cmd_solve, "compute the stationary distribution")
    sp.add_argument("--dump-dist", metavar="CSV",
                    help="write per-level orbit probabilities to CSV")
    sp = add("measures", cmd_measures, "solve and report performance measures")
    sp.add_argument("--out", metavar="CSV", help="write measures row to CSV")
    sp = add("sweep", cmd_sweep, "recompute measures along a parameter grid")
    sp.add_argument("--param", required=True,
                    help="dotted parameter path, e.g. arrivals_normal.scale_H")
    sp.add_argument("--values", required=True,
                    help="comma separated parameter values")
    sp.add_argument("--out", metavar="CSV", help="write sweep table to CSV")
    sp.add_argument("--no-plot", action="store_true",
                    help="skip rendering the figure next to the CSV")
    sp = add("simulate", cmd_simulate, "run the discrete-event simulator")
    sp.add_argument("--events", type=int, default=1_000_000)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--out", metavar="CSV", help="write estimates to CSV")
    sp = add("optimize", cmd_optimize, "search backup-channel designs")
    sp.add_argument("--out", metavar="CSV", help="write the design front to CSV")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        for msg in e.errors:
            _say(f"config error: {msg}")
        return EXIT_CONFIG
    except FileNotFoundError as e:
        _say(f"config error: {e}")
        return EXIT_CONFIG
    except UnstableConfigError as e:
        _say(f"model is unstable: {e.report}")
        return EXIT_UNSTABLE
    except NumericalFailure as e:
        _say(f"numerical failure: {e}")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
