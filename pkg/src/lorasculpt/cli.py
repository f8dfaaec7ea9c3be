"""Command-line entry point: ``sculpt {theory,train,sweep,report}``.

Exit status: 0 success, 1 acceptance-check failure, 2 usage or config
error, 3 numeric failure during training.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .config import SWEEP_PARAMS, RunConfig, parse_config
from .errors import ConfigError, SculptError, TrainingError
from .model import attach_adapters
from .numcore import RandomStream
from .serialize import dump_adapters, dump_base, load_base
from .tasks import make_tasks
from .theory import (BERNOULLI, EXACT_TOPK, SparsitySpec, monte_carlo_validate,
                     write_report_csv)
from .trainer import (ADAPTER_STREAM, LAYER_COLUMNS, TrainConfig, evaluate,
                      pretrain_base, train_baseline, write_eval_csv, write_layers_csv,
                      write_trace_csv)

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
SEED_ENV = "SCULPT_SEED"

MODES = {"bernoulli": (BERNOULLI, False), "topk": (EXACT_TOPK, False), "hetero": (BERNOULLI, True)}


def _err(msg: str) -> None:
    print(f"sculpt: {msg}", file=sys.stderr)


# --- theory -----------------------------------------------------------------

def cmd_theory(args) -> int:
    sampling, hetero = MODES[args.mode]
    spec = SparsitySpec(args.p, args.q, args.r, args.s_a, args.s_b, sampling, hetero, args.band)
    report = monte_carlo_validate(args.seed, spec, args.trials, args.delta, workers=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(report, out / "theory.csv")
    gap = report.empirical_mean - report.expected_sparsity
    mean_ok = gap <= args.tol if hetero else abs(gap) <= args.tol
    bound_ok = report.violation_rate <= min(1.0, report.bound)
    print(f"expected={report.expected_sparsity:.6f} mean={report.empirical_mean:.6f} "
          f"std={report.empirical_std:.6f} delta={report.delta:g} bound={report.bound:.6g} "
          f"violations={report.violations}/{report.trials} "
          f"{'PASS' if mean_ok and bound_ok else 'FAIL'}")
    return EXIT_OK if mean_ok and bound_ok else EXIT_CHECK


# --- train ------------------------------------------------------------------

def load_run_config(path: str) -> RunConfig:
    text = Path(path).read_text()
    overrides = {}
    if os.environ.get(SEED_ENV):
        overrides["seed"] = os.environ[SEED_ENV]
    return parse_config(text, overrides=overrides)


def prepare_base(cfg: TrainConfig, base_path: str | None = None):
    task = make_tasks(cfg.seed)
    arch = cfg.arch(task)
    if base_path is None:
        base = pretrain_base(cfg.seed, task, arch, cfg.pretrain_steps, cfg.pretrain_lr)
    else:
        base = load_base(Path(base_path).read_text())
        shapes = [l.w0.shape for l in base.layers]
        want = [(arch.dims[i + 1], arch.dims[i]) for i in range(len(arch.dims) - 1)]
        if shapes != want:
            raise ConfigError(f"base file layer shapes {shapes} do not match config {want}")
        attach_adapters(base, RandomStream(cfg.seed, ADAPTER_STREAM), arch.rank, arch.scaling)
    return task, base


def run_training(cfg: TrainConfig, out: Path, base_path: str | None = None):
    """Pretrain (or load), fine-tune, evaluate and write every run artifact."""
    task, base = prepare_base(cfg, base_path)
    before = evaluate(base, task)
    tuned, trace = train_baseline(base, task, cfg)
    after = evaluate(tuned, task)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(RunConfig(train=cfg).to_text())
    (out / "base.txt").write_text(dump_base(base))
    (out / "adapters.txt").write_text(dump_adapters(tuned))
    write_trace_csv(trace, out / "trace.csv")
    write_eval_csv(before, out / "base_eval.csv")
    write_eval_csv(after, out / "eval.csv")
    write_layers_csv(after, out / "layers.csv")
    return before, after, trace


def cmd_train(args) -> int:
    run = load_run_config(args.config)
    _, after, _ = run_training(run.train, Path(args.out), args.base)
    print(after.summary())
    return EXIT_OK


# --- sweep ------------------------------------------------------------------

def _sweep_seed(cfg: TrainConfig, field_name: str, values: list[float]) -> list[tuple]:
    task, base = prepare_base(cfg)
    rows = []
    for v in values:
        run_cfg = replace(cfg, **{field_name: v})
        tuned, _ = train_baseline(base, task, run_cfg)
        ev = evaluate(tuned, task)
        rows.append((v, cfg.seed, ev.source, ev.target, ev.avg))
    return rows


def run_sweep(cfg: TrainConfig, param: str, values: list[float], n_seeds: int,
              jobs: int = 1) -> list[tuple]:
    field_name = SWEEP_PARAMS[param]
    seeds = [replace(cfg, seed=cfg.seed + i) for i in range(n_seeds)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            chunks = list(pool.map(_sweep_seed, seeds, [field_name] * n_seeds,
                                   [values] * n_seeds))
    else:
        chunks = [_sweep_seed(c, field_name, values) for c in seeds]
    rows = [r for chunk in chunks for r in chunk]
    order = {v: i for i, v in enumerate(values)}
    rows.sort(key=lambda r: (order[r[0]], r[1]))
    return rows


def cmd_sweep(args) -> int:
    if args.param not in SWEEP_PARAMS:
        _err(f"unknown sweep parameter {args.param!r}; choose from {sorted(SWEEP_PARAMS)}")
        return EXIT_USAGE
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        _err(f"bad --values list {args.values!r}")
        return EXIT_USAGE
    if not values or args.seeds < 1:
        _err("need at least one value and one seed")
        return EXIT_USAGE
    run = load_run_config(args.config)
    # validate every grid point before spending time on training
    for v in values:
        replace(run.train, **{SWEEP_PARAMS[args.param]: v})
    rows = run_sweep(run.train, args.param, values, args.seeds, args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param_value", "seed", "source", "target", "avg"])
        for v, seed, src, tgt, avg in rows:
            w.writerow([repr(v), seed, repr(src), repr(tgt), repr(avg)])
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'}")
    return EXIT_OK


# --- report -----------------------------------------------------------------

def build_report(run_dir: Path, slack: float = 0.1, min_dim: int = 64) -> tuple[list[dict], bool]:
    """Per-layer sparsity rows and whether every checked layer is within ``slack``."""
    with open(run_dir / "layers.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != set(LAYER_COLUMNS):
        raise ConfigError(f"{run_dir / 'layers.csv'} is not a layer table")
    ok = True
    for row in rows:
        actual = float(row["structural_sparsity"])
        expected = float(row["expected_sparsity"])
        checked = int(row["p"]) >= min_dim and int(row["q"]) >= min_dim
        within = actual <= min(1.0, expected + slack)
        row["excess"] = actual - expected
        row["checked"] = checked
        row["within_bound"] = within
        ok = ok and (within or not checked)
    return rows, ok


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def cmd_report(args) -> int:
    run_dir = Path(args.input)
    missing = [n for n in ("layers.csv", "eval.csv") if not (run_dir / n).is_file()]
    if missing:
        _err(f"{run_dir} is missing {', '.join(missing)}")
        return EXIT_USAGE
    rows, ok = build_report(run_dir, args.slack, args.min_dim)
    with open(run_dir / "eval.csv", newline="") as fh:
        agg = {r["task_id"]: r["score"] for r in csv.DictReader(fh)
               if r["task_id"] in ("Source", "Target", "Avg")}
    cols = [*LAYER_COLUMNS, "excess", "checked", "within_bound"]
    with open(run_dir / "sparsity_report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r[c]) for c in cols])
    lines = [f"run: {run_dir}",
             "scores: " + " ".join(f"{k}={float(v):.6f}" for k, v in agg.items()),
             f"{'layer':>5} {'role':>9} {'shape':>12} {'actual':>8} {'expected':>8}  status"]
    for r in rows:
        shape = f"{r['p']}x{r['q']}/r{r['r']}"
        status = ("ok" if r["within_bound"] else "EXCEEDS") if r["checked"] else "unchecked"
        lines.append(f"{r['layer_idx']:>5} {r['role']:>9} {shape:>12} "
                     f"{float(r['structural_sparsity']):8.4f} {float(r['expected_sparsity']):8.4f}  {status}")
    lines.append(f"layers with p,q >= {args.min_dim} within expected + {args.slack}: "
                 f"{'yes' if ok else 'no'}")
    text = "\n".join(lines) + "\n"
    (run_dir / "summary.txt").write_text(text)
    print(text, end="")
    return EXIT_OK if ok else EXIT_CHECK


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sculpt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    th = sub.add_parser("theory", help="Monte Carlo check of the product-sparsity theorems")
    th.add_argument("--p", type=int, default=256)
    th.add_argument("--q", type=int, default=256)
    th.add_argument("--r", type=int, default=16)
    th.add_argument("--s-a", type=float, default=0.1)
    th.add_argument("--s-b", type=float, default=0.1)
    th.add_argument("--trials", type=int, default=200)
    th.add_argument("--delta", type=float, default=0.05)
    th.add_argument("--mode", choices=sorted(MODES), default="bernoulli")
    th.add_argument("--band", type=float, default=0.9,
                    help="relative half-width of heterogeneous densities")
    th.add_argument("--tol", type=float, default=0.01,
                    help="allowed gap between empirical mean and expectation")
    th.add_argument("--seed", type=int, default=42)
    th.add_argument("--jobs", type=int, default=1)
    th.add_argument("--out", required=True)
    th.set_defaults(func=cmd_theory, subparser=th)

    tr = sub.add_parser("train", help="pretrain, fine-tune and evaluate one configuration")
    tr.add_argument("--config", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--base", help="reuse base weights from a previous run's base.txt")
    tr.set_defaults(func=cmd_train, subparser=tr)

    sw = sub.add_parser("sweep", help="grid over one hyperparameter and several seeds")
    sw.add_argument("--config", required=True)
    sw.add_argument("--param", required=True)
    sw.add_argument("--values", required=True)
    sw.add_argument("--seeds", type=int, default=3)
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out", required=True)
    sw.set_defaults(func=cmd_sweep, subparser=sw)

    rp = sub.add_parser("report", help="per-layer sparsity table for a finished run")
    rp.add_argument("--in", dest="input", required=True)
    rp.add_argument("--slack", type=float, default=0.1)
    rp.add_argument("--min-dim", type=int, default=64)
    rp.set_defaults(func=cmd_report, subparser=rp)
    return parser


def _validate(args) -> None:
    parser = args.subparser
    if args.command == "theory":
        if args.delta < 0:
            parser.error("--delta must be non-negative")
        if args.trials < 1 or min(args.p, args.q, args.r) < 1:
            parser.error("--trials, --p, --q and --r must be positive")
        if not (0 <= args.s_a <= 1 and 0 <= args.s_b <= 1):
            parser.error("--s-a and --s-b must lie in [0, 1]")
        if not 0 <= args.band <= 1:
            parser.error("--band must lie in [0, 1]")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be positive")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except TrainingError as exc:
        _err(str(exc))
        return EXIT_NUMERIC
    except (ConfigError, OSError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    except SculptError as exc:
        _err(str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
