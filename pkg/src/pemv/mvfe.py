"""Multi-view feature extraction over a shared convolutional feature map.

Two heads operate on the backbone output: a global head (spatial mean plus a
learned projection) and K view heads, each a 1x1 score projection whose
spatial softmax weights a channel-vector pooling followed by a per-view
projection. The concatenation of the K view features is the mediator.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .errors import ConfigError, ShapeError


def check_feature_map(fm: torch.Tensor) -> torch.Tensor:
    """Validate a feature map; accepts (C,H,W) or (B,C,H,W), returns batched."""
    if fm.dim() == 3:
        fm = fm.unsqueeze(0)
    if fm.dim() != 4:
        raise ShapeError(f"expected feature map (B, C, H, W), received {tuple(fm.shape)}")
    if not torch.isfinite(fm).all():
        raise ShapeError("feature map contains non-finite values")
    return fm


class GlobalHead(nn.Module):
    """Spatial mean pooling followed by an affine projection."""

    def __init__(self, in_channels: int, d_g: int):
        super().__init__()
        self.proj = nn.Linear(in_channels, d_g)

    def forward(self, fm: torch.Tensor) -> torch.Tensor:
        squeeze = fm.dim() == 3
        fm = check_feature_map(fm)
        g = self.proj(fm.mean(dim=(2, 3)))  # (B, d_g)
        return g.squeeze(0) if squeeze else g


class ViewHeads(nn.Module):
    """K attention experts pooling the shared feature map into view features.

    Per view k: a 1x1 projection yields a scalar score map, softmax over the
    H*W positions yields the attention weights, and the attention-weighted sum
    of channel vectors is projected to d_v. Attention rows are non-negative
    and sum to one per view.
    """

    def __init__(self, in_channels: int, num_views: int, d_v: int):
        super().__init__()
        if num_views < 1:
            raise ConfigError(f"num_views must be >= 1, got {num_views}")
        self.num_views = num_views
        self.d_v = d_v
        self.score = nn.Conv2d(in_channels, num_views, kernel_size=1)
        self.proj = nn.ModuleList(nn.Linear(in_channels, d_v) for _ in range(num_views))

    def forward(self, fm: torch.Tensor):
        """Returns (mediator (B, K*d_v), attention (B, K, H, W))."""
        squeeze = fm.dim() == 3
        fm = check_feature_map(fm)
        b, c, h, w = fm.shape
        scores = self.score(fm).reshape(b, self.num_views, h * w)
        attention = torch.softmax(scores, dim=-1)  # (B, K, H*W)
        # weighted channel pooling: (B, K, H*W) x (B, H*W, C) -> (B, K, C)
        pooled = torch.bmm(attention, fm.reshape(b, c, h * w).transpose(1, 2))
        views = [self.proj[k](pooled[:, k]) for k in range(self.num_views)]
        mediator = torch.cat(views, dim=1)  # (B, K*d_v)
        attention = attention.reshape(b, self.num_views, h, w)
        if squeeze:
            return mediator.squeeze(0), attention.squeeze(0)
        return mediator, attention


def split_mediator(mediator: torch.Tensor, d_v: int) -> list[torch.Tensor]:
    """Recover the per-view features from a concatenated mediator."""
    if mediator.shape[-1] % d_v != 0:
        raise ShapeError(f"mediator width {mediator.shape[-1]} is not a multiple of d_v={d_v}")
    return list(torch.split(mediator, d_v, dim=-1))
