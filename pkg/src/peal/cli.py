"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import platform
import sys
import traceback
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .alloop import RunMetrics, aggregate, run_experiment, trial_seeds
from .config import ConfigError, ExperimentConfig, load_config
from .datasets import (
    Dataset,
    DatasetFormatError,
    SyntheticSpec,
    export_csv,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .report import (
    AGGREGATE_COLUMNS,
    TRIAL_COLUMNS,
    ReportError,
    aggregate_row,
    load_run,
    render_svg,
    summary_table,
    trial_row,
    write_csv,
)

log = logging.getLogger("peal")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _csv_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


# generate ----------------------------------------------------------------------


def cmd_generate(args) -> int:
    spec = SyntheticSpec(
        num_classes=args.classes, per_class=args.per_class, tokens=args.tokens, dim=args.dim,
        separation=args.separation, noise=args.noise, imbalance=args.imbalance,
        seed=args.seed, test_fraction=args.test_fraction, kind=args.kind,
    )
    try:
        dataset = generate_synthetic(spec)
    except ValueError as exc:
        raise UsageError(f"invalid synthetic spec: {exc}") from None
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        save_dataset(dataset, out)
        if args.csv:
            export_csv(dataset, args.csv)
    except OSError as exc:
        print(f"error: cannot write {out}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {out}: {dataset.summary()}")
    return EXIT_OK


# run ---------------------------------------------------------------------------


def resolve_dataset(config: ExperimentConfig) -> Dataset:
    ds = config.dataset
    if ds.path:
        return load_dataset(ds.path, ds.test_fraction, ds.split_seed)
    return generate_synthetic(ds.synthetic_spec())


def _versions() -> dict:
    return {
        "peal": __version__, "python": platform.python_version(),
        "numpy": np.__version__, "scipy": scipy.__version__,
    }


def execute_run(config: ExperimentConfig, out_dir) -> int:
    """Run one experiment into ``out_dir``; returns an exit code."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "FAILED").unlink(missing_ok=True)
    (out / "config.txt").write_text(config.to_text(), encoding="utf-8")
    seeds = trial_seeds(config)
    manifest = {
        "status": "running",
        "strategy": config.al.strategy,
        "mode": config.model.mode,
        "balanced": config.al.balanced,
        "config_sha256": config.digest(),
        "seeds": seeds,
        "versions": _versions(),
    }
    manifest_path = out / "manifest.json"

    def write_manifest():
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    write_manifest()
    handles = {}
    timings: dict[int, list[float]] = {}

    def on_cycle(k, rec):
        if k not in handles:
            fh = open(out / f"trial_{k}.csv", "w", newline="", encoding="utf-8")
            fh.write(",".join(TRIAL_COLUMNS) + "\n")
            handles[k] = fh
        handles[k].write(",".join(trial_row(k, rec, config.run.record_wall_time)) + "\n")
        handles[k].flush()
        timings.setdefault(k, []).append(round(rec.wall_time_s, 6))
        log.info("trial %d cycle %d: labeled=%d acc=%.4f", k, rec.cycle, rec.labeled_count, rec.test_accuracy)

    try:
        dataset = resolve_dataset(config)
        manifest["dataset"] = dataset.summary()
        result = run_experiment(config, dataset, on_cycle)
    except Exception as exc:
        for fh in handles.values():
            fh.close()
        (out / "FAILED").write_text(traceback.format_exc(), encoding="utf-8")
        manifest["status"] = "failed"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        write_manifest()
        print(f"error: run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for fh in handles.values():
        fh.close()

    write_csv(out / "aggregate.csv", AGGREGATE_COLUMNS, [aggregate_row(r) for r in result.aggregate])
    manifest["status"] = "complete"
    manifest["wall_time_s"] = {str(k): v for k, v in sorted(timings.items())}
    manifest["flags"] = _flags(result.trials)
    write_manifest()
    print(f"{config.al.strategy} ({config.model.mode}): {len(result.trials)} trial(s), "
          f"{len(result.aggregate)} cycles -> {out}")
    return EXIT_OK


def _flags(trials: list[RunMetrics]) -> dict:
    return {
        "partial_final_cycle": any(c.partial for t in trials for c in t.cycles),
        "pool_exhausted": any(c.pool_exhausted for t in trials for c in t.cycles),
    }


def cmd_run(args) -> int:
    config = load_config(args.config, args.set or ())
    if args.output:
        config.run.output = args.output
    return execute_run(config, config.run.output)


def cmd_sweep(args) -> int:
    base = load_config(args.config, args.set or ())
    strategies = _csv_list(args.strategies) if args.strategies else [base.al.strategy]
    seeds = [int(s) for s in _csv_list(args.seeds)] if args.seeds else [base.run.seed]
    modes = _csv_list(args.modes) if args.modes else [base.model.mode]
    root = Path(args.output or base.run.output)
    status = EXIT_OK
    for mode, strategy, seed in itertools.product(modes, strategies, seeds):
        config = base.copy()
        config.model.mode = mode
        config.al.strategy = strategy
        config.run.seed = seed
        config.validate()
        name = f"{mode}-{strategy}-{'balanced' if config.al.balanced else 'agnostic'}-seed{seed}"
        config.run.output = str(root / name)
        status = max(status, execute_run(config, config.run.output))
    return status


def cmd_report(args) -> int:
    try:
        runs = [load_run(d) for d in args.runs]
    except ReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(summary_table(runs, args.target))
    svg = Path(args.svg)
    svg.parent.mkdir(parents=True, exist_ok=True)
    svg.write_text(render_svg(runs), encoding="utf-8")
    print(f"wrote {svg}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="peal", description="Parameter-efficient active learning experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-cycle progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic dataset file (PTOK or PEMB)")
    g.add_argument("--out", required=True, help="output dataset path")
    g.add_argument("--kind", choices=["tokens", "embeddings"], default="tokens")
    g.add_argument("--classes", type=int, default=10)
    g.add_argument("--per-class", type=int, default=250)
    g.add_argument("--tokens", type=int, default=4)
    g.add_argument("--dim", type=int, default=16)
    g.add_argument("--separation", type=float, default=3.0)
    g.add_argument("--noise", type=float, default=1.0)
    g.add_argument("--imbalance", type=_floats, default=None, help="class size ratios, e.g. 5,1 (tiled over classes)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--test-fraction", type=float, default=0.2)
    g.add_argument("--csv", help="also export the dataset as CSV")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run an experiment from a config file")
    r.add_argument("config")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    r.add_argument("--output", help="output directory (overrides run.output)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run the cartesian product of strategies / seeds / modes")
    s.add_argument("config")
    s.add_argument("--strategies", help="comma-separated, e.g. random,entropy,featdist")
    s.add_argument("--seeds", help="comma-separated base seeds")
    s.add_argument("--modes", help="comma-separated backbone modes (adapter,frozen)")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.add_argument("--output", help="root directory for the sweep")
    s.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summarize runs and plot accuracy curves")
    p.add_argument("runs", nargs="+", help="run directories")
    p.add_argument("--target", type=float, default=0.9, help="accuracy for the samples-to-reach column")
    p.add_argument("--svg", default="report.svg", help="SVG output path")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError, DatasetFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
