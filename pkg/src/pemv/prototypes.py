"""Per-class prototype bank and the mediator correction it drives.

Prototypes are momentum-averaged class means of mediator vectors, updated
outside the autograd graph. Correction is an affine blend: pull the mediator
toward the same-class prototype, push it away from the other-class prototype.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import PrototypeNotReadyError, ShapeError


def correct_mediator(
    mediator: torch.Tensor,
    p_same: torch.Tensor,
    p_other: torch.Tensor,
    gamma_align: float,
    gamma_contrast: float,
) -> torch.Tensor:
    """A + g_align * (P_same - A) + g_contrast * (A - P_other).

    Affine in each argument; evaluated in the factored form
    (1 - g_align + g_contrast) * A + g_align * P_same - g_contrast * P_other
    so that g_align = 1, g_contrast = 0 returns P_same exactly. Both
    coefficients zero returns the mediator itself, bit for bit.
    """
    if p_same.shape[-1] != mediator.shape[-1] or p_other.shape[-1] != mediator.shape[-1]:
        raise ShapeError(
            f"prototype width {p_same.shape[-1]}/{p_other.shape[-1]} does not match "
            f"mediator width {mediator.shape[-1]}"
        )
    if gamma_align == 0.0 and gamma_contrast == 0.0:
        return mediator
    return (1.0 - gamma_align + gamma_contrast) * mediator + gamma_align * p_same - gamma_contrast * p_other


class PrototypeBank(nn.Module):
    """Momentum-averaged class reference vectors in mediator space.

    State lives in buffers so it rides along in checkpoints. Updates are
    restricted to the training loop; no gradient flows through them.
    """

    def __init__(self, num_classes: int, dim: int, momentum: float = 0.9):
        super().__init__()
        if not 0.0 <= momentum <= 1.0:
            raise ValueError(f"momentum must lie in [0, 1], got {momentum}")
        self.momentum = float(momentum)
        self.register_buffer("prototypes", torch.zeros(num_classes, dim))
        self.register_buffer("initialized", torch.zeros(num_classes, dtype=torch.bool))
        self.corrections_skipped = 0  # warm-up bypass counter, diagnostics only

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]

    def all_initialized(self) -> bool:
        return bool(self.initialized.all())

    @torch.no_grad()
    def update(self, mediators: torch.Tensor, labels: torch.Tensor) -> None:
        """EMA update from a batch; classes absent from the batch are untouched.

        First batch containing a class initializes its slot with the batch
        class mean; afterwards P_c := m * P_c + (1 - m) * batch_mean.
        """
        if mediators.dim() != 2 or mediators.shape[1] != self.dim:
            raise ShapeError(
                f"expected mediators of shape (B, {self.dim}), received {tuple(mediators.shape)}"
            )
        mediators = mediators.detach()
        for c in labels.unique().tolist():
            mean = mediators[labels == c].mean(dim=0)
            if self.initialized[c]:
                self.prototypes[c] = self.momentum * self.prototypes[c] + (1.0 - self.momentum) * mean
            else:
                self.prototypes[c] = mean
                self.initialized[c] = True

    def retrieve(self, labels: torch.Tensor):
        """Labeled retrieval: (P_same, P_other) rows per sample, binary classes."""
        self._require_ready("labeled retrieval")
        p_same = self.prototypes[labels]
        p_other = self.prototypes[1 - labels]
        return p_same, p_other

    def retrieve_nearest(self, mediators: torch.Tensor):
        """Label-free retrieval by cosine similarity; ties resolve to class 0.

        Returns (P_same, P_other, same_class_index).
        """
        self._require_ready("inference retrieval")
        sims = F.cosine_similarity(
            mediators.unsqueeze(1), self.prototypes.unsqueeze(0).to(mediators.dtype), dim=-1
        )  # (B, C)
        same = (sims[:, 1] > sims[:, 0]).long()
        return self.prototypes[same], self.prototypes[1 - same], same

    def _require_ready(self, what: str):
        if not self.all_initialized():
            missing = [c for c in range(self.num_classes) if not self.initialized[c]]
            raise PrototypeNotReadyError(
                f"{what} requires prototypes for all classes, but classes {missing} are "
                f"uninitialized; load a trained checkpoint or train past warm-up first"
            )
