"""Command-line entry point.

Subcommands: verify, train, eval, ablate, sweep, oracle. Exit codes: 0 on
success, 1 on run or validation failure, 2 on usage errors. ``PEMV_DATA_ROOT``
supplies the dataset root when the config leaves it empty.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path

from .config import (
    ExperimentConfig,
    apply_overrides,
    build_config,
    config_hash,
    config_to_text,
    load_config,
)
from .data import load_split_dir, verify_dataset
from .errors import ConfigError, DataError, PemvError
from .experiment import evaluate_checkpoint, run_ablation, run_multiseed, run_sweep_views
from .frontdoor import run_soundness_suite
from .metrics import METRIC_NAMES
from .version import __version__

log = logging.getLogger("pemv")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="path to a flat key=value config file")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a config key after file values (repeatable)",
    )
    parser.add_argument("--seed", type=int, default=None, help="replace the seed list with this single seed")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--quiet", action="store_true", help="log warnings and errors only")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pemv",
        description="Prototype-enhanced multi-view classification experiments",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"pemv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        _add_common_flags(p)
        return p

    p = add("verify", "check dataset layout, split disjointness, and class counts")
    p.add_argument("--data-root", default=None, help="dataset root (falls back to PEMV_DATA_ROOT)")
    p.add_argument("--split-dir", default=None, help="directory containing train.txt/val.txt/test.txt")

    add("train", "train across the configured seeds and aggregate metrics")

    p = add("eval", "evaluate a checkpoint on one split")
    p.add_argument("--checkpoint", required=True, help="checkpoint archive to evaluate")
    p.add_argument("--split", default="test", choices=["train", "val", "test"], help="split to evaluate")

    add("ablate", "run the cumulative AB1-AB5 component ladder")

    p = add("sweep", "sensitivity sweep over the number of view heads")
    p.add_argument("--views", default="1..9", help="view counts, e.g. '1..9' or '1,3,5'")

    p = add("oracle", "verify the front-door identity on random discrete causal models")
    p.add_argument("--trials", type=int, default=1000, help="number of random models to check")

    return parser


def _parse_views(expr: str) -> list[int]:
    expr = expr.strip()
    try:
        if ".." in expr:
            lo, hi = expr.split("..", maxsplit=1)
            values = list(range(int(lo), int(hi) + 1))
        else:
            values = [int(tok) for tok in expr.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse view counts from {expr!r}") from None
    if not values or any(v < 1 for v in values):
        raise ConfigError(f"view counts must be positive integers, got {expr!r}")
    return values


def _resolve_config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config, args.overrides)
    else:
        cfg = build_config(apply_overrides({}, args.overrides))
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.out is not None:
        cfg = cfg.replace(out_dir=args.out)
    if not cfg.data.root:
        cfg = cfg.replace(data=dataclasses.replace(cfg.data, root=os.environ.get("PEMV_DATA_ROOT", "")))
    cfg.validate()
    return cfg


def _write_run_manifest(out_dir: Path, cfg: ExperimentConfig, integrity: dict) -> None:
    """Materialized config, tool version, timestamp, seeds, and dataset summary.

    Written once, before any training output, and never touched afterwards.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool_version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "seeds": list(cfg.seeds),
        "config_hash": config_hash(cfg),
        "config": config_to_text(cfg).splitlines(),
        "dataset_integrity": integrity,
    }
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def _verified_manifests(cfg: ExperimentConfig):
    """Load split manifests and fail fast on integrity violations."""
    manifests = load_split_dir(cfg.data.split_dir)
    report = verify_dataset(manifests, cfg.data.root)
    print(report.to_text())
    if not report.ok:
        raise PemvError("dataset integrity check failed; fix the violations above")
    return manifests, report


def cmd_verify(args) -> int:
    root = args.data_root or os.environ.get("PEMV_DATA_ROOT")
    if not root or not Path(root).is_dir():
        print(f"error: dataset root {root!r} is not a directory", file=sys.stderr)
        return EXIT_USAGE
    if not args.split_dir or not Path(args.split_dir).is_dir():
        print(f"error: split dir {args.split_dir!r} is not a directory", file=sys.stderr)
        return EXIT_USAGE
    manifests = load_split_dir(args.split_dir)
    report = verify_dataset(manifests, root)
    print(report.to_text())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "integrity_report.json", "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
    return EXIT_OK if report.ok else EXIT_FAILURE


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    _, integrity = _verified_manifests(cfg)
    out_dir = Path(cfg.out_dir)
    _write_run_manifest(out_dir, cfg, integrity.to_dict())
    report = run_multiseed(cfg)
    print(f"test: {report.table_row('test')}")
    if report.failed_seeds:
        print(f"warning: {len(report.failed_seeds)} seed(s) failed: {sorted(report.failed_seeds)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    manifests, _ = _verified_manifests(cfg)
    if not Path(args.checkpoint).is_file():
        print(f"error: checkpoint {args.checkpoint!r} not found", file=sys.stderr)
        return EXIT_USAGE
    metrics = evaluate_checkpoint(
        args.checkpoint, cfg.data.root, manifests[args.split], cfg.data,
        cfg.train.batch_size, cfg.train.device,
    )
    payload = {"split": args.split, **{m: round(getattr(metrics, m), 4) for m in METRIC_NAMES}}
    print(json.dumps(payload, indent=2))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"eval_{args.split}.json", "w", encoding="utf-8") as fh:
            json.dump(metrics.as_dict(), fh, indent=2)
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _resolve_config(args)
    _, integrity = _verified_manifests(cfg)
    out_dir = Path(cfg.out_dir)
    _write_run_manifest(out_dir, cfg, integrity.to_dict())
    reports = run_ablation(cfg)
    print((out_dir / "ablation_table.txt").read_text(encoding="utf-8"))
    failed = {lvl: r.failed_seeds for lvl, r in reports.items() if r.failed_seeds}
    if failed:
        print(f"warning: failed seeds per level: {failed}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    views = _parse_views(args.views)
    _, integrity = _verified_manifests(cfg)
    out_dir = Path(cfg.out_dir)
    _write_run_manifest(out_dir, cfg, integrity.to_dict())
    rows = run_sweep_views(cfg, views)
    for row in rows:
        print(f"num_views={row['num_views']}: acc {row['acc_mean']:.2f}±{row['acc_std']:.2f}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.trials < 1:
        print(f"error: --trials must be >= 1, got {args.trials}", file=sys.stderr)
        return EXIT_USAGE
    seed = args.seed if args.seed is not None else 0
    report = run_soundness_suite(trials=args.trials, seed=seed)
    print(report.to_text())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "oracle_report.json", "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
    return EXIT_OK if report.passed else EXIT_FAILURE


_HANDLERS = {
    "verify": cmd_verify,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s"
    )
    try:
        return _HANDLERS[args.command](args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PemvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
