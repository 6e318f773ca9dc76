"""Dataset ingestion: split manifests, deterministic preprocessing, and
training-only augmentation.

Split files are plain text, one ``<relative_path> <label>`` entry per
non-empty line, labels 0 (benign) / 1 (malignant). Images resolve against a
dataset root as ``<root>/<relative_path>``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torchvision.transforms.functional as TF
from PIL import Image
from torch.utils.data import Dataset

from .config import DataConfig
from .errors import DataError

IMAGE_SIZE = 128
SPLIT_NAMES = ("train", "val", "test")


@dataclass
class SplitManifest:
    name: str
    entries: list[tuple[str, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def paths(self) -> set[str]:
        return {p for p, _ in self.entries}

    def labels(self) -> list[int]:
        return [lbl for _, lbl in self.entries]


def parse_split_file(path, name: str | None = None) -> SplitManifest:
    """Read a split file; order preserved, duplicates and bad labels rejected."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"split file not found: {path}")
    manifest = SplitManifest(name=name or path.stem)
    seen: set[str] = set()
    text = path.read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        rel, sep, label_tok = line.rpartition(" ")
        if not sep or not rel or rel != rel.strip():
            raise DataError(f"{path}:{lineno}: expected '<relative_path> <label>', got {line!r}")
        try:
            label = int(label_tok)
        except ValueError:
            raise DataError(f"{path}:{lineno}: label {label_tok!r} is not an integer") from None
        if label not in (0, 1):
            raise DataError(f"{path}:{lineno}: label {label} outside {{0, 1}}")
        if rel in seen:
            raise DataError(f"{path}:{lineno}: duplicate path {rel!r}")
        seen.add(rel)
        manifest.entries.append((rel, label))
    return manifest


def write_split_file(path, manifest: SplitManifest) -> None:
    Path(path).write_text(
        "".join(f"{rel} {label}\n" for rel, label in manifest.entries), encoding="utf-8"
    )


def train_val_split(entries, val_fraction: float = 0.2, seed: int = 0):
    """Deterministic shuffled partition of (path, label) pairs.

    The assignment is a function of (entries, val_fraction, seed) alone, so a
    split generated once can be frozen to manifest files and re-created
    bit-identically.
    """
    if not 0.0 < val_fraction < 1.0:
        raise DataError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    order = list(entries)
    random.Random(seed).shuffle(order)
    n_val = round(len(order) * val_fraction)
    return order[n_val:], order[:n_val]


@dataclass
class DatasetRecord:
    image: torch.Tensor  # (3, 128, 128), normalized
    label: int
    path: str


def _augment(img: torch.Tensor, cfg: DataConfig, rng: random.Random) -> torch.Tensor:
    """Train-time transforms on a [0, 1] tensor: flip, small rotation, jitter."""
    if rng.random() < cfg.hflip_prob:
        img = torch.flip(img, dims=[2])
    angle = rng.uniform(-cfg.rotate_degrees, cfg.rotate_degrees)
    if angle != 0.0:
        img = TF.rotate(img, angle, interpolation=TF.InterpolationMode.BILINEAR, fill=0.0)
    img = TF.adjust_brightness(img, 1.0 + rng.uniform(-cfg.jitter, cfg.jitter))
    img = TF.adjust_contrast(img, 1.0 + rng.uniform(-cfg.jitter, cfg.jitter))
    return img


def load_record(
    root,
    entry: tuple[str, int],
    mode: str,
    cfg: DataConfig | None = None,
    rng: random.Random | None = None,
) -> DatasetRecord:
    """Decode, resize to 128x128, scale to [0, 1], normalize; augment in train mode.

    Eval-mode loading is a pure function of the file bytes and config.
    """
    if mode not in ("train", "eval"):
        raise DataError(f"mode must be 'train' or 'eval', got {mode!r}")
    cfg = cfg or DataConfig()
    rel, label = entry
    full = Path(root) / rel
    try:
        with Image.open(full) as im:
            im = im.convert("RGB").resize((IMAGE_SIZE, IMAGE_SIZE), Image.BILINEAR)
    except FileNotFoundError:
        raise DataError(f"image not found: {full}") from None
    except Exception as exc:
        raise DataError(f"cannot decode image {full}: {exc}") from exc

    img = TF.pil_to_tensor(im).float() / 255.0  # (3, 128, 128) in [0, 1]
    if mode == "train" and cfg.augment:
        img = _augment(img, cfg, rng or random.Random())
    img = (img - cfg.norm_mean) / cfg.norm_std
    return DatasetRecord(image=img, label=label, path=str(rel))


@dataclass
class IntegrityReport:
    missing: list[str] = field(default_factory=list)
    overlaps: list[str] = field(default_factory=list)
    class_counts: dict[str, dict[int, int]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.missing and not self.overlaps

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "missing": self.missing,
            "overlaps": self.overlaps,
            "class_counts": {s: {str(k): v for k, v in c.items()} for s, c in self.class_counts.items()},
        }

    def to_text(self) -> str:
        lines = [f"dataset integrity: {'PASS' if self.ok else 'FAIL'}"]
        for split, counts in self.class_counts.items():
            total = sum(counts.values())
            lines.append(f"  {split}: {total} entries (benign {counts.get(0, 0)}, malignant {counts.get(1, 0)})")
        if self.missing:
            lines.append(f"  missing files ({len(self.missing)}):")
            lines.extend(f"    {m}" for m in self.missing[:20])
            if len(self.missing) > 20:
                lines.append(f"    ... and {len(self.missing) - 20} more")
        if self.overlaps:
            lines.append(f"  split overlaps ({len(self.overlaps)}):")
            lines.extend(f"    {o}" for o in self.overlaps)
        return "\n".join(lines)


def verify_dataset(manifests: dict[str, SplitManifest], root) -> IntegrityReport:
    """Check file existence, pairwise split disjointness, and class balance."""
    report = IntegrityReport()
    root = Path(root)
    for split, manifest in manifests.items():
        counts = {0: 0, 1: 0}
        for rel, label in manifest.entries:
            counts[label] += 1
            if not (root / rel).is_file():
                report.missing.append(f"{split}: {rel}")
        report.class_counts[split] = counts
    names = list(manifests)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            for shared in sorted(manifests[a].paths & manifests[b].paths):
                report.overlaps.append(f"{shared} appears in both {a} and {b}")
    return report


def load_split_dir(split_dir) -> dict[str, SplitManifest]:
    """Read train/val/test manifests from ``<split_dir>/<split>.txt``."""
    split_dir = Path(split_dir)
    manifests = {}
    for split in SPLIT_NAMES:
        path = split_dir / f"{split}.txt"
        if not path.is_file():
            raise DataError(f"missing split file: {path}")
        manifests[split] = parse_split_file(path, name=split)
    return manifests


class ManifestDataset(Dataset):
    """Torch dataset over a manifest.

    Augmentation randomness is a pure function of (base_seed, epoch, index),
    so runs reproduce exactly and parallel workers cannot interleave state.
    Call ``set_epoch`` before each training epoch.
    """

    def __init__(self, root, manifest: SplitManifest, mode: str, cfg: DataConfig, base_seed: int = 0):
        self.root = root
        self.manifest = manifest
        self.mode = mode
        self.cfg = cfg
        self.base_seed = base_seed
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.manifest)

    def __getitem__(self, idx: int):
        rng = None
        if self.mode == "train":
            rng = random.Random((self.base_seed * 1_000_003 + self.epoch) * 1_000_003 + idx)
        record = load_record(self.root, self.manifest.entries[idx], self.mode, self.cfg, rng)
        return record.image, record.label
