"""Joint training objective: cross-entropy, the fusion loss with its batch
marginalization, and the attention-entropy purity regularizer.

Probabilities are clamped to [1e-12, 1] inside every log so that q * log(q)
evaluates to exactly 0 at q = 0.
"""

from __future__ import annotations

import math
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import LossConfig
from .errors import ShapeError

LOG_EPS = 1e-12

# Above this batch size each anchor pairs with a sampled subset of marginal
# partners instead of the full batch, bounding the O(B^2) pair count.
FULL_PAIRING_MAX_BATCH = 32
PARTNERS_PER_ANCHOR = 8


def classification_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean negative log-softmax probability of the true class."""
    if logits.dim() != 2 or logits.shape[0] == 0:
        raise ShapeError(f"expected non-empty logits (B, C), received {tuple(logits.shape)}")
    if labels.shape[0] != logits.shape[0]:
        raise ShapeError(f"batch mismatch: {logits.shape[0]} logits vs {labels.shape[0]} labels")
    if not torch.isfinite(logits).all():
        raise ShapeError("logits contain non-finite values")
    return F.cross_entropy(logits, labels)


def fusion_loss(
    corrected_same: torch.Tensor,
    corrected_diff: torch.Tensor,
    global_feats: torch.Tensor,
    labels: torch.Tensor,
    head: nn.Module,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Self-weighted log-probability loss over batch-marginalized pairs.

    For anchor i and marginal partner j, each corrected mediator variant is
    fused with the partner's global feature and pushed through the classifier
    head. The same-aligned pass reads its probability at the anchor's label,
    the other-aligned pass at the opposite label, and each contributes
    -q * log(q). The outer marginal is uniform over the batch; the loss is
    the mean over all (i, j) pairs.
    """
    b = corrected_same.shape[0]
    if b < 2:
        raise ShapeError(f"fusion loss needs a batch of >= 2 samples for marginalization, got {b}")
    if corrected_diff.shape != corrected_same.shape or global_feats.shape[0] != b:
        raise ShapeError("corrected mediator variants and global features must share the batch dim")

    if b <= FULL_PAIRING_MAX_BATCH:
        partners = torch.arange(b, device=global_feats.device).expand(b, b)  # (B, B)
    else:
        rows = [torch.randperm(b, generator=generator)[:PARTNERS_PER_ANCHOR] for _ in range(b)]
        partners = torch.stack(rows).to(global_feats.device)  # (B, P)

    g_j = global_feats[partners]  # (B, P, d_g)
    p = partners.shape[1]

    def branch_term(corrected: torch.Tensor, read_at: torch.Tensor) -> torch.Tensor:
        z = torch.cat([g_j, corrected.unsqueeze(1).expand(-1, p, -1)], dim=-1)
        q = torch.softmax(head(z), dim=-1)  # (B, P, C)
        q_sel = q.gather(-1, read_at.view(-1, 1, 1).expand(-1, p, 1)).squeeze(-1)
        return q_sel * torch.log(q_sel.clamp(min=LOG_EPS))

    term = branch_term(corrected_same, labels) + branch_term(corrected_diff, 1 - labels)
    return -term.mean()


def information_purity(attention: torch.Tensor) -> torch.Tensor:
    """Mean normalized spatial entropy of the view attention, in [0, 1].

    Accepts (K, H, W) or (B, K, H, W). One-hot attention scores 0, uniform
    attention scores 1; a 1x1 grid is defined as 0.
    """
    if attention.dim() == 3:
        attention = attention.unsqueeze(0)
    if attention.dim() != 4:
        raise ShapeError(f"expected attention (B, K, H, W), received {tuple(attention.shape)}")
    b, k, h, w = attention.shape
    cells = h * w
    if cells == 1:
        return attention.new_zeros(())
    flat = attention.reshape(b, k, cells)
    entropy = -(flat * torch.log(flat.clamp(min=LOG_EPS))).sum(dim=-1)  # (B, K) nats
    return (entropy / math.log(cells)).mean()


def total_loss(lo: torch.Tensor, lf: torch.Tensor, lip: torch.Tensor, cfg: LossConfig) -> torch.Tensor:
    """Lo + lambda_f * Lf (if enabled) + mu_ip * Lip (if enabled)."""
    total = lo
    if cfg.enable_lf:
        total = total + cfg.lambda_f * lf
    if cfg.enable_ip:
        total = total + cfg.mu_ip * lip
    return total
