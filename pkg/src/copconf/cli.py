"""Command line entry point: ``copconf {run,sweep,theory,gen,bench}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, theory
from .datagen import Setting, SynthConfig, generate, write_csv
from .errors import CopError
from .trackers import TrackerConfig, Variant, track

log = logging.getLogger("copconf")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return tuple(out)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file; flags override its values")
    p.add_argument("--dataset", help="synthetic setting name or path to a t,value CSV")
    p.add_argument("--predictor", choices=["ar3", "theta"])
    p.add_argument("--method", choices=[v.value for v in Variant])
    p.add_argument("--alpha", type=float)
    p.add_argument("--etas", type=_floats, help="comma separated eta grid")
    p.add_argument("--schedule", choices=["constant", "window", "decay", "sf"])
    p.add_argument("--lambdas", type=_floats, help="comma separated scale factors")
    p.add_argument("--window", type=int)
    p.add_argument("--cdf-kind", dest="cdf_kind", choices=["ecdf", "kde"])
    p.add_argument("--gamma", type=float)
    p.add_argument("--seeds", type=_ints, help="e.g. 0-9 or 1,4,7")
    p.add_argument("--initial-radius", dest="initial_radius", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--fit-window", dest="fit_window", type=int)
    p.add_argument("--log-transform", dest="log_transform", action="store_true", default=None)
    p.add_argument("--epsilon-gate", dest="epsilon_gate", type=float)
    p.add_argument("--selection", choices=list(harness.SELECTION_RULES))
    p.add_argument("--coverage-tol", dest="coverage_tol", type=float)


def _out_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.add_argument("--timing", action="store_true", help="write measured per_step_ns (not byte-stable)")


def config_from_args(args: argparse.Namespace) -> harness.ExperimentConfig:
    base = harness.ExperimentConfig.load(args.config).to_dict() if args.config else {}
    for key in harness.ExperimentConfig.__dataclass_fields__:
        value = getattr(args, key, None)
        if value is not None:
            base[key] = list(value) if isinstance(value, tuple) else value
    return harness.ExperimentConfig(**base)


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    lam = cfg.lambdas[0]
    args.out.mkdir(parents=True, exist_ok=True)
    if len(cfg.eta_grid) > 1:
        best, points = harness.best_eta(cfg, lam)
        harness.write_rows(
            [{"eta": p.eta, "coverage": p.coverage, "avg_width": p.avg_width, "median_width": p.median_width} for p in points],
            args.out / "eta_grid.csv",
            ("eta", "coverage", "avg_width", "median_width"),
        )
        eta = best.eta
    else:
        eta = cfg.eta_grid[0]
    runs = [harness.run_experiment(cfg, eta, lam, seed) for seed in cfg.seeds]
    rows = [harness.summary_row(r, cfg) for r in runs]
    if len(rows) > 1:
        rows += list(harness.seed_stats(rows))
    paths = harness.emit_results(
        args.out,
        rows,
        harness.trajectory_rows(runs[0]),
        harness.bound_rows(cfg, eta, lam, cfg.seeds[0]),
        args.format,
        args.timing,
    )
    cfg.save(args.out / "config.json")
    for r in rows:
        print(f"seed={r['seed']} eta={r['eta']} coverage={harness._fmt(r['coverage'])} avg_width={harness._fmt(r['avg_width'])}")
    log.info("wrote %s", ", ".join(str(p) for p in paths))
    return 0


def cmd_sweep(args) -> int:
    cfg = config_from_args(args)
    values = _floats(args.values) if args.values else None
    if values is not None and args.axis == "seed":
        values = tuple(int(v) for v in values)
    rows = harness.sweep(cfg, args.axis, values)
    harness.emit_results(args.out, rows, fmt=args.format, timing=args.timing)
    cfg.save(args.out / "config.json")
    for r in rows:
        print(f"{args.axis}: seed={r['seed']} eta={r['eta']} lambda={r['lambda']} gamma={r['gamma']} "
              f"coverage={harness._fmt(r['coverage'])} avg_width={harness._fmt(r['avg_width'])}")
    return 0


def theory_battery(streams: int = 100, regret_runs: int = 50, seed: int = 0) -> list[dict]:
    """Certificates on adversarial streams plus regret and convergence checks."""
    rows = []
    for i in range(streams):
        s, rates = theory.adversarial_stream(seed + i)
        for rep in theory.certify_stream(s, rates):
            rows.append({"side": f"adversarial_{seed + i}", **rep.row()})
    for name, s in theory.worst_case_streams().items():
        for rep in theory.certify_stream(s, np.full(len(s), 0.5)):
            rows.append({"side": name, **rep.row()})
    for i in range(regret_runs):
        s, _ = theory.adversarial_stream(seed + i)
        eta = 0.1
        traj = track(s, TrackerConfig(variant=Variant.COP, alpha=0.1, eta=eta), rates=np.full(len(s), eta))
        rep = theory.check_regret_coverage(traj, theory.rolling_quantile_comparator(s, 0.1), eta)
        rows.append({"side": f"regret_{seed + i}", **rep.row()})
    return rows


def cmd_theory(args) -> int:
    rows = theory_battery(args.streams, args.regret_runs, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    harness.write_rows(rows, args.out / f"bounds.{'csv' if args.format == 'csv' else 'jsonl'}", harness.BOUND_FIELDS, args.format)
    failed = [r for r in rows if not r["satisfied"]]
    print(f"{len(rows) - len(failed)}/{len(rows)} certificates satisfied")
    return 1 if failed else 0


def cmd_gen(args) -> int:
    _, y = generate(SynthConfig(Setting(args.setting), args.n, args.seed))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(y, args.out)
    print(f"wrote {len(y)} rows to {args.out}")
    return 0


def cmd_bench(args) -> int:
    cfg = config_from_args(args)
    eta = cfg.eta_grid[0]
    run = harness.run_experiment(cfg, eta)
    result = {
        "dataset": cfg.dataset,
        "method": cfg.method,
        "window": cfg.window,
        "steps": len(run),
        "per_step_ns": run.mean_step_ns(),
    }
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "bench.json").write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(result))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="copconf", description="Online conformal intervals with COP and baselines.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="select eta on the grid, run every seed, write results")
    _add_config_flags(p)
    _out_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="summaries along one axis")
    _add_config_flags(p)
    _out_flags(p)
    p.add_argument("--axis", choices=["seed", "eta", "lambda", "gamma"], required=True)
    p.add_argument("--values", help="comma separated axis values (default grid otherwise)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("theory", help="certify the coverage, boundedness and regret bounds")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.add_argument("--streams", type=int, default=100)
    p.add_argument("--regret-runs", dest="regret_runs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("gen", help="dump a synthetic stream as t,value CSV")
    p.add_argument("--setting", choices=[s.value for s in Setting], required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="CSV file to write")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="mean per-step update time")
    _add_config_flags(p)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CopError, ValueError, OSError) as exc:
        print(f"copconf: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
