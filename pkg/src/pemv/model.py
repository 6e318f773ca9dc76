"""The fused classifier network: backbone -> global + view features ->
prototype correction -> concatenated head, plus checkpoint save/load.

Component toggles mirror the ablation ladder: with MVFE disabled the head
sees only the global feature (a plain backbone classifier); with PBC disabled
the raw mediator is fused; with both enabled the corrected mediator is fused.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn

from .backbone import FeatureBackbone
from .config import ModelConfig, model_config_hash
from .errors import CheckpointError, ShapeError
from .mvfe import GlobalHead, ViewHeads
from .prototypes import PrototypeBank, correct_mediator

CHECKPOINT_VERSION = 1


@dataclass
class ForwardResult:
    """Everything the training loop and the loss terms need from one pass."""

    logits: torch.Tensor                      # (B, C)
    global_feat: torch.Tensor                 # (B, d_g)
    mediator: Optional[torch.Tensor] = None   # (B, K*d_v)
    attention: Optional[torch.Tensor] = None  # (B, K, H, W)
    corrected: Optional[torch.Tensor] = None  # mediator actually fused
    corrected_same: Optional[torch.Tensor] = None  # aligned to P_y
    corrected_diff: Optional[torch.Tensor] = None  # aligned to P_{other}
    correction_applied: bool = False


def predict(logits: torch.Tensor) -> torch.Tensor:
    """Argmax class per sample; ties resolve to the lowest index (class 0)."""
    if not torch.isfinite(logits).all():
        raise ShapeError("logits contain non-finite values")
    return torch.argmax(logits, dim=-1)


class PemvNet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.backbone = FeatureBackbone()
        self.global_head = GlobalHead(self.backbone.out_channels, cfg.d_g)
        head_in = cfg.d_g
        if cfg.enable_mvfe:
            self.views = ViewHeads(self.backbone.out_channels, cfg.num_views, cfg.d_v)
            head_in += cfg.d_mediator
        if cfg.enable_pbc:
            self.prototypes = PrototypeBank(cfg.num_classes, cfg.d_mediator, cfg.prototype_momentum)
        self.head = nn.Linear(head_in, cfg.num_classes)

    def fuse_and_classify(self, global_feat: torch.Tensor, mediator: Optional[torch.Tensor]) -> torch.Tensor:
        """Head logits from [g; A_hat] (or g alone when MVFE is off)."""
        z = global_feat if mediator is None else torch.cat([global_feat, mediator], dim=-1)
        if z.shape[-1] != self.head.in_features:
            raise ShapeError(
                f"fused feature width {z.shape[-1]} does not match head input {self.head.in_features}"
            )
        return self.head(z)

    def forward(self, images: torch.Tensor, labels: Optional[torch.Tensor] = None) -> ForwardResult:
        """Full forward pass.

        With labels (training) the correction aligns to the label's prototype;
        without labels the nearest prototype by cosine similarity stands in.
        During warm-up (bank not yet holding both classes) the correction is
        bypassed and the raw mediator is fused.
        """
        fm = self.backbone(images)
        g = self.global_head(fm)
        if not self.cfg.enable_mvfe:
            return ForwardResult(logits=self.fuse_and_classify(g, None), global_feat=g)

        mediator, attention = self.views(fm)
        result = ForwardResult(logits=None, global_feat=g, mediator=mediator, attention=attention)

        fused = mediator
        if self.cfg.enable_pbc:
            if labels is not None:
                if self.prototypes.all_initialized():
                    p_same, p_other = self.prototypes.retrieve(labels)
                    ga, gc = self.cfg.gamma_align, self.cfg.gamma_contrast
                    result.corrected_same = correct_mediator(mediator, p_same, p_other, ga, gc)
                    result.corrected_diff = correct_mediator(mediator, p_other, p_same, ga, gc)
                    fused = result.corrected_same
                    result.correction_applied = True
                else:
                    self.prototypes.corrections_skipped += 1
            else:
                # inference path; raises if the bank was never trained
                p_same, p_other, _ = self.prototypes.retrieve_nearest(mediator)
                ga, gc = self.cfg.gamma_align, self.cfg.gamma_contrast
                fused = correct_mediator(mediator, p_same, p_other, ga, gc)
                result.correction_applied = True

        result.corrected = fused
        result.logits = self.fuse_and_classify(g, fused)
        return result

    @torch.no_grad()
    def update_prototypes(self, mediators: torch.Tensor, labels: torch.Tensor) -> None:
        if self.cfg.enable_pbc:
            self.prototypes.update(mediators, labels)


class BaselineClassifier(nn.Module):
    """Plain backbone + global head classifier (the ERM reference model)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.backbone = FeatureBackbone()
        self.global_head = GlobalHead(self.backbone.out_channels, cfg.d_g)
        self.head = nn.Linear(cfg.d_g, cfg.num_classes)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.head(self.global_head(self.backbone(images)))


# --- checkpoint container ----------------------------------------------------


def save_checkpoint(path, model: PemvNet, seed: int, epoch: int, extra: dict | None = None) -> None:
    """Write a versioned archive: parameters (prototype buffers included),
    the model config, seed, epoch, and a config hash validated on load."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "model_config": {k: getattr(model.cfg, k) for k in model.cfg.__dataclass_fields__},
        "config_hash": model_config_hash(model.cfg),
        "state_dict": model.state_dict(),
        "seed": int(seed),
        "epoch": int(epoch),
    }
    if extra:
        payload["extra"] = extra
    torch.save(payload, path)


def load_checkpoint(path, map_location="cpu") -> tuple[PemvNet, dict]:
    """Load and validate a checkpoint; returns (model, metadata)."""
    try:
        payload = torch.load(path, map_location=map_location, weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "version" not in payload:
        raise CheckpointError(f"{path} is not a checkpoint archive")
    if payload["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {payload['version']} unsupported (expected {CHECKPOINT_VERSION})"
        )
    cfg = ModelConfig(**payload["model_config"])
    if model_config_hash(cfg) != payload["config_hash"]:
        raise CheckpointError(f"config hash mismatch in {path}; archive is inconsistent")
    model = PemvNet(cfg)
    model.load_state_dict(payload["state_dict"])
    meta = {k: payload[k] for k in ("seed", "epoch", "config_hash")}
    meta.update(payload.get("extra", {}))
    return model, meta
