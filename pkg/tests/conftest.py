"""Shared fixtures: synthetic image datasets sized for the different suites."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from pemv.data import SplitManifest, write_split_file


def make_synthetic_dataset(root: Path, split_dir: Path, counts: dict[str, int], seed: int = 0):
    """Write PNG images with an easy class signal plus split files.

    Benign (0): dark square on a dim background. Malignant (1): bright disc.
    Labels alternate so every split stays balanced.
    """
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    split_dir.mkdir(parents=True, exist_ok=True)
    manifests = {}
    for split, n in counts.items():
        entries = []
        (root / split).mkdir(exist_ok=True)
        for i in range(n):
            label = i % 2
            img = rng.integers(60, 100, size=(128, 128), dtype=np.uint8)
            if label == 1:
                yy, xx = np.ogrid[:128, :128]
                cy, cx = rng.integers(40, 88), rng.integers(40, 88)
                mask = (yy - cy) ** 2 + (xx - cx) ** 2 < 24**2
                img[mask] = rng.integers(180, 230)
            else:
                y0, x0 = rng.integers(10, 60), rng.integers(10, 60)
                img[y0 : y0 + 30, x0 : x0 + 30] = rng.integers(10, 40)
            rel = f"{split}/{i:04d}.png"
            Image.fromarray(img, mode="L").save(root / rel)
            entries.append((rel, label))
        manifest = SplitManifest(split, entries)
        write_split_file(split_dir / f"{split}.txt", manifest)
        manifests[split] = manifest
    return manifests


@pytest.fixture(scope="session")
def micro_dataset(tmp_path_factory):
    """Tiny dataset for fast trainer/CLI tests: 8/4/4 images."""
    base = tmp_path_factory.mktemp("micro_ds")
    root, splits = base / "data", base / "splits"
    make_synthetic_dataset(root, splits, {"train": 8, "val": 4, "test": 4}, seed=1)
    return {"root": root, "split_dir": splits}


@pytest.fixture(scope="session")
def overfit_dataset(tmp_path_factory):
    """Fixed 32-sample training subset for the overfit sanity run."""
    base = tmp_path_factory.mktemp("overfit_ds")
    root, splits = base / "data", base / "splits"
    make_synthetic_dataset(root, splits, {"train": 32, "val": 8, "test": 8}, seed=2)
    return {"root": root, "split_dir": splits}


@pytest.fixture(scope="session")
def harness_dataset(tmp_path_factory):
    """200-image subset for the ablation/sweep harness checks: 140/30/30."""
    base = tmp_path_factory.mktemp("harness_ds")
    root, splits = base / "data", base / "splits"
    make_synthetic_dataset(root, splits, {"train": 140, "val": 30, "test": 30}, seed=3)
    return {"root": root, "split_dir": splits}
