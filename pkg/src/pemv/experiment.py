"""Training loop, evaluation, multi-seed aggregation, the AB1-AB5 ablation
ladder, and the view-count sensitivity sweep.

Every run writes ``training_log.csv`` (per-epoch loss components and
validation metrics, no timestamps so identical seeds reproduce identical
bytes), a best-validation checkpoint, and per-group ``metrics.csv`` plus
``aggregate.json``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import random
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader

from .config import ABLATION_LEVELS, ExperimentConfig, config_hash, with_ablation
from .data import ManifestDataset, SplitManifest, load_split_dir
from .errors import PemvError, TrainingDivergedError
from .losses import classification_loss, fusion_loss, information_purity, total_loss
from .metrics import METRIC_NAMES, ClassMetrics, binary_metrics, format_mean_std, mean_std
from .model import PemvNet, load_checkpoint, predict, save_checkpoint
from .version import __version__

log = logging.getLogger("pemv")


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def git_state_tag() -> str:
    """Current commit (plus -dirty) if running inside a git checkout."""
    try:
        head = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True, timeout=5
        )
        if head.returncode != 0:
            return "unknown"
        dirty = subprocess.run(
            ["git", "status", "--porcelain"], capture_output=True, text=True, timeout=5
        )
        suffix = "-dirty" if dirty.stdout.strip() else ""
        return head.stdout.strip() + suffix
    except (OSError, subprocess.TimeoutExpired):
        return "unknown"


def resolve_device(device: str) -> torch.device:
    if device == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    return torch.device(device)


@dataclass
class TrainResult:
    seed: int
    best_epoch: int
    best_val_acc: float
    checkpoint_path: str
    log_path: str
    final_train_loss: float
    fusion_skips: int
    correction_skips: int


def _build_loader(dataset, batch_size, shuffle, seed, num_workers):
    generator = None
    if shuffle:
        generator = torch.Generator()
        generator.manual_seed(seed)
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        num_workers=num_workers,
        generator=generator,
        drop_last=False,
    )


@torch.no_grad()
def evaluate_model(model: PemvNet, loader, device) -> ClassMetrics:
    """Inference-path metrics: label-free prototype retrieval, malignant positive."""
    model.eval()
    trues, preds = [], []
    for images, labels in loader:
        result = model(images.to(device))
        preds.append(predict(result.logits).cpu())
        trues.append(labels)
    model.train()
    return binary_metrics(torch.cat(trues).numpy(), torch.cat(preds).numpy())


def evaluate_checkpoint(checkpoint_path, root, manifest: SplitManifest, data_cfg, batch_size=16,
                        device="auto") -> ClassMetrics:
    model, _ = load_checkpoint(checkpoint_path)
    dev = resolve_device(device)
    model.to(dev)
    dataset = ManifestDataset(root, manifest, mode="eval", cfg=data_cfg)
    loader = _build_loader(dataset, batch_size, shuffle=False, seed=0, num_workers=data_cfg.num_workers)
    metrics = evaluate_model(model, loader, dev)
    model.eval()
    return metrics


def train_run(cfg: ExperimentConfig, seed: int, run_dir) -> TrainResult:
    """One seeded training run with best-validation-accuracy model selection."""
    cfg.validate()
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    device = resolve_device(cfg.train.device)
    seed_everything(seed)

    manifests = load_split_dir(cfg.data.split_dir)
    train_ds = ManifestDataset(cfg.data.root, manifests["train"], "train", cfg.data, base_seed=seed)
    val_ds = ManifestDataset(cfg.data.root, manifests["val"], "eval", cfg.data)
    train_loader = _build_loader(train_ds, cfg.train.batch_size, True, seed, cfg.data.num_workers)
    val_loader = _build_loader(val_ds, cfg.train.batch_size, False, seed, cfg.data.num_workers)

    model = PemvNet(cfg.model).to(device)
    model.train()
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=cfg.train.lr, weight_decay=cfg.train.weight_decay
    )
    pair_generator = torch.Generator(device="cpu")
    pair_generator.manual_seed(seed + 0x5EED)

    log_path = run_dir / "training_log.csv"
    ckpt_path = run_dir / "best.ckpt"
    best_acc = -1.0
    best_epoch = -1
    fusion_skips = 0
    final_train_loss = math.nan

    with open(log_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["epoch", "loss_total", "loss_cls", "loss_fusion", "loss_ip",
             "val_acc", "val_precision", "val_recall", "val_f1"]
        )
        for epoch in range(1, cfg.train.epochs + 1):
            train_ds.set_epoch(epoch)
            sums = {"total": 0.0, "cls": 0.0, "fusion": 0.0, "ip": 0.0}
            batches = 0
            for batch_idx, (images, labels) in enumerate(train_loader):
                images, labels = images.to(device), labels.to(device)
                result = model(images, labels=labels)
                lo = classification_loss(result.logits, labels)

                lf = result.logits.new_zeros(())
                if cfg.loss.enable_lf:
                    if result.corrected_same is not None and labels.shape[0] >= 2:
                        lf = fusion_loss(
                            result.corrected_same, result.corrected_diff,
                            result.global_feat, labels, model.head, generator=pair_generator,
                        )
                    else:
                        fusion_skips += 1

                lip = result.logits.new_zeros(())
                if cfg.loss.enable_ip and result.attention is not None:
                    lip = information_purity(result.attention)

                loss = total_loss(lo, lf, lip, cfg.loss)
                if not torch.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, batch {batch_idx}",
                        diagnostics={
                            "epoch": epoch,
                            "batch": batch_idx,
                            "loss_cls": lo.item(),
                            "loss_fusion": lf.item(),
                            "loss_ip": lip.item(),
                            "labels": labels.tolist(),
                        },
                    )
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                if result.mediator is not None:
                    model.update_prototypes(result.mediator, labels)

                sums["total"] += loss.item()
                sums["cls"] += lo.item()
                sums["fusion"] += lf.item()
                sums["ip"] += lip.item()
                batches += 1

            means = {k: v / max(batches, 1) for k, v in sums.items()}
            final_train_loss = means["total"]
            val = evaluate_model(model, val_loader, device)
            writer.writerow(
                [epoch] + [f"{means[k]:.4f}" for k in ("total", "cls", "fusion", "ip")]
                + [f"{v:.4f}" for v in (val.acc, val.precision, val.recall, val.f1)]
            )
            if val.acc > best_acc:  # ties keep the earlier epoch
                best_acc = val.acc
                best_epoch = epoch
                save_checkpoint(ckpt_path, model, seed=seed, epoch=epoch,
                                extra={"val_acc": val.acc})
            log.info("seed %d epoch %d/%d loss %.4f val_acc %.2f",
                     seed, epoch, cfg.train.epochs, means["total"], val.acc)
            if cfg.train.stop_at_train_loss > 0 and means["total"] <= cfg.train.stop_at_train_loss:
                log.info("train loss %.4f reached stop threshold %.4f at epoch %d",
                         means["total"], cfg.train.stop_at_train_loss, epoch)
                break

    return TrainResult(
        seed=seed,
        best_epoch=best_epoch,
        best_val_acc=best_acc,
        checkpoint_path=str(ckpt_path),
        log_path=str(log_path),
        final_train_loss=final_train_loss,
        fusion_skips=fusion_skips,
        correction_skips=model.prototypes.corrections_skipped if cfg.model.enable_pbc else 0,
    )


@dataclass
class MetricsReport:
    """Per-seed and aggregate metrics for one configuration."""

    config_hash: str
    per_seed: dict[int, dict[str, ClassMetrics]] = field(default_factory=dict)
    failed_seeds: dict[int, str] = field(default_factory=dict)
    aggregates: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)
    wall_time: float = 0.0

    def aggregate(self) -> None:
        self.aggregates = {}
        for split in ("val", "test"):
            self.aggregates[split] = {}
            for metric in METRIC_NAMES:
                values = [getattr(m[split], metric) for m in self.per_seed.values()]
                mean, std = mean_std(values)
                self.aggregates[split][metric] = {"mean": round(mean, 4), "std": round(std, 4)}

    def table_row(self, split: str = "test") -> str:
        cells = [
            format_mean_std(self.aggregates[split][m]["mean"], self.aggregates[split][m]["std"])
            for m in METRIC_NAMES
        ]
        return "  ".join(cells)

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "seeds": sorted(self.per_seed),
            "failed_seeds": {str(k): v for k, v in self.failed_seeds.items()},
            "aggregates": self.aggregates,
            "table_row_test": self.table_row("test") if self.per_seed else "",
            "metadata": {
                "tool_version": __version__,
                "git_state": git_state_tag(),
                "wall_time_seconds": round(self.wall_time, 3),
                "std_convention": "population (ddof=0) over seeds",
            },
        }


def run_multiseed(cfg: ExperimentConfig, out_dir=None) -> MetricsReport:
    """Train and evaluate one configuration across all seeds, then aggregate."""
    cfg.validate()
    out_dir = Path(out_dir if out_dir is not None else cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifests = load_split_dir(cfg.data.split_dir)
    report = MetricsReport(config_hash=config_hash(cfg))
    t0 = time.perf_counter()

    for seed in cfg.seeds:
        run_dir = out_dir / f"seed_{seed}"
        try:
            result = train_run(cfg, seed, run_dir)
            per_split = {}
            for split in ("val", "test"):
                per_split[split] = evaluate_checkpoint(
                    result.checkpoint_path, cfg.data.root, manifests[split],
                    cfg.data, cfg.train.batch_size, cfg.train.device,
                )
            report.per_seed[seed] = per_split
        except Exception as exc:  # noqa: BLE001 - a failed seed must not sink the others
            log.warning("seed %d failed: %s", seed, exc)
            report.failed_seeds[seed] = f"{type(exc).__name__}: {exc}"

    if not report.per_seed:
        raise PemvError(f"all {len(cfg.seeds)} seed runs failed: {report.failed_seeds}")
    if report.failed_seeds:
        log.warning("aggregating over %d/%d completed seeds", len(report.per_seed), len(cfg.seeds))

    report.aggregate()
    report.wall_time = time.perf_counter() - t0

    with open(out_dir / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "split", "acc", "precision", "recall", "f1"])
        for seed in sorted(report.per_seed):
            for split in ("val", "test"):
                m = report.per_seed[seed][split]
                writer.writerow(
                    [seed, split] + [f"{getattr(m, name):.4f}" for name in METRIC_NAMES]
                )
    with open(out_dir / "aggregate.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    log.info("aggregate (test): %s", report.table_row("test"))
    return report


def run_ablation(cfg: ExperimentConfig, out_dir=None) -> dict[str, MetricsReport]:
    """Run the cumulative AB1-AB5 ladder and emit the combined table."""
    out_dir = Path(out_dir if out_dir is not None else cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports: dict[str, MetricsReport] = {}
    for level in ABLATION_LEVELS:
        level_cfg = with_ablation(cfg, level)
        log.info("ablation %s", level)
        reports[level] = run_multiseed(level_cfg, out_dir / level)

    with open(out_dir / "ablation_table.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["level"]
        for metric in METRIC_NAMES:
            header += [f"{metric}_mean", f"{metric}_std"]
        writer.writerow(header)
        for level, report in reports.items():
            row = [level]
            for metric in METRIC_NAMES:
                agg = report.aggregates["test"][metric]
                row += [f"{agg['mean']:.4f}", f"{agg['std']:.4f}"]
            writer.writerow(row)

    lines = ["level  " + "  ".join(f"{m:>16}" for m in METRIC_NAMES)]
    for level, report in reports.items():
        cells = [
            format_mean_std(report.aggregates["test"][m]["mean"], report.aggregates["test"][m]["std"])
            for m in METRIC_NAMES
        ]
        lines.append(f"{level:<6} " + "  ".join(f"{c:>16}" for c in cells))
    (out_dir / "ablation_table.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return reports


def run_sweep_views(cfg: ExperimentConfig, k_values, out_dir=None) -> list[dict]:
    """One multiseed group per view count; emits plot-ready CSV rows."""
    if not k_values or any(k < 1 for k in k_values):
        raise PemvError(f"view counts must be >= 1, got {list(k_values)}")
    out_dir = Path(out_dir if out_dir is not None else cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for k in k_values:
        k_cfg = cfg.replace(model=dataclasses.replace(cfg.model, num_views=k))
        log.info("sweep num_views=%d", k)
        report = run_multiseed(k_cfg, out_dir / f"K{k}")
        row = {"num_views": k, "config_hash": report.config_hash}
        for metric in METRIC_NAMES:
            agg = report.aggregates["test"][metric]
            row[f"{metric}_mean"] = agg["mean"]
            row[f"{metric}_std"] = agg["std"]
        rows.append(row)

    with open(out_dir / "sweep_views.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["num_views"] + [f"{m}_{s}" for m in METRIC_NAMES for s in ("mean", "std")]
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [row["num_views"]]
                + [f"{row[f'{m}_{s}']:.4f}" for m in METRIC_NAMES for s in ("mean", "std")]
            )
    return rows
