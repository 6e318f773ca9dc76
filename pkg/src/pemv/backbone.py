"""ResNet-18 feature extractor.

The network consumes normalized (3, 128, 128) images and exposes the last
pre-pooling convolutional feature map: five stride-2 stages take 128 down to
4, so the output is (512, 4, 4).
"""

from __future__ import annotations

import torch
import torch.nn as nn
from torchvision.models import resnet18

from .errors import ShapeError

IMAGE_SHAPE = (3, 128, 128)
FEATURE_CHANNELS = 512
FEATURE_SIZE = 4


def check_image_batch(images: torch.Tensor) -> torch.Tensor:
    """Validate image input; accepts (3,H,W) or (B,3,H,W), returns batched."""
    if images.dim() == 3:
        images = images.unsqueeze(0)
    if images.dim() != 4 or tuple(images.shape[1:]) != IMAGE_SHAPE:
        raise ShapeError(
            f"expected image batch of shape (B, {', '.join(map(str, IMAGE_SHAPE))}), "
            f"received {tuple(images.shape)}"
        )
    if not torch.isfinite(images).all():
        raise ShapeError("image batch contains non-finite values")
    return images


class FeatureBackbone(nn.Module):
    """ResNet-18 trunk without the average pool and fc head."""

    def __init__(self):
        super().__init__()
        net = resnet18(weights=None)
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
        self.layer1 = net.layer1
        self.layer2 = net.layer2
        self.layer3 = net.layer3
        self.layer4 = net.layer4
        self.out_channels = FEATURE_CHANNELS

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """(B, 3, 128, 128) -> feature map (B, 512, 4, 4).

        A single (3, 128, 128) image is accepted and returns (512, 4, 4).
        """
        squeeze = images.dim() == 3
        x = check_image_batch(images)
        x = self.stem(x)
        x = self.layer1(x)
        x = self.layer2(x)
        x = self.layer3(x)
        x = self.layer4(x)
        return x.squeeze(0) if squeeze else x
