"""Backbone construction for the two supported activation sources.

"vgg16-pool5" is the full VGG16 convolutional stack (the last max-pool
output, 512 channels); "resnet101-res5c_relu" is ResNet-101 through
layer4, whose final bottleneck ends in a ReLU (2048 channels). Both are
post-ReLU layers, so activations are non-negative by construction.
"""

from __future__ import annotations

from pathlib import Path

import torch
from torch import nn
from torchvision import models

from .spec import ExtractionSpec, ExtractorError

CHANNEL_CONTRACTS = {
    "vgg16-pool5": 512,
    "resnet101-res5c_relu": 2048,
}

# Minimum image side after crop/resize; five stride-2 stages need 32 px.
MIN_SIDE = 32

_BUILDERS = {
    "vgg16-pool5": (models.vgg16, models.VGG16_Weights.IMAGENET1K_V1),
    "resnet101-res5c_relu": (models.resnet101, models.ResNet101_Weights.IMAGENET1K_V1),
}


def _build_net(spec: ExtractionSpec) -> nn.Module:
    builder, pretrained_enum = _BUILDERS[spec.model]
    if spec.weights == "random":
        torch.manual_seed(spec.seed)
        return builder(weights=None)
    if spec.weights == "pretrained":
        try:
            return builder(weights=pretrained_enum)
        except Exception as exc:
            raise ExtractorError(
                f"could not fetch pretrained weights ({exc}); pass a local "
                f"state-dict path via --weights when offline"
            ) from exc
    state_path = Path(spec.weights)
    if not state_path.is_file():
        raise ExtractorError(f"weights file not found: {state_path}")
    net = builder(weights=None)
    state = torch.load(state_path, map_location="cpu", weights_only=True)
    net.load_state_dict(state)
    return net


def build_backbone(spec: ExtractionSpec) -> tuple[nn.Module, int]:
    """Deterministic, eval-mode feature extractor plus its channel contract."""
    if spec.model not in CHANNEL_CONTRACTS:
        raise ExtractorError(
            f"unknown model {spec.model!r}, expected one of {sorted(CHANNEL_CONTRACTS)}"
        )
    net = _build_net(spec)
    if spec.model == "vgg16-pool5":
        backbone: nn.Module = net.features
    else:
        backbone = nn.Sequential(
            net.conv1,
            net.bn1,
            net.relu,
            net.maxpool,
            net.layer1,
            net.layer2,
            net.layer3,
            net.layer4,
        )
    backbone.eval()
    for param in backbone.parameters():
        param.requires_grad_(False)
    return backbone, CHANNEL_CONTRACTS[spec.model]
