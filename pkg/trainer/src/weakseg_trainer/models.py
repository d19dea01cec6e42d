"""Backbone factory: ResNet variants with a two-logit crack head."""

from __future__ import annotations

import warnings

import torch
import torchvision

from .config import BACKBONES

CRACK_INDEX = 1

_WEIGHT_ENUMS = {
    "resnet50": "ResNet50_Weights",
    "resnet101": "ResNet101_Weights",
    "resnet152": "ResNet152_Weights",
}


def build_model(backbone: str, pretrained: bool) -> torch.nn.Module:
    if backbone not in BACKBONES:
        raise ValueError(f"backbone must be one of {BACKBONES}, got {backbone!r}")
    factory = getattr(torchvision.models, backbone)
    if pretrained:
        try:
            weights = getattr(torchvision.models, _WEIGHT_ENUMS[backbone]).IMAGENET1K_V1
            model = factory(weights=weights)
        except Exception as e:  # weights download needs network access
            warnings.warn(f"pretrained weights unavailable ({e}); falling back to random init")
            model = factory(weights=None)
    else:
        model = factory(weights=None)
    model.fc = torch.nn.Linear(model.fc.in_features, 2)
    return model


def last_conv_layer(model: torch.nn.Module) -> torch.nn.Module:
    """The deepest conv module; activation-map hooks attach here."""
    last = None
    for module in model.modules():
        if isinstance(module, torch.nn.Conv2d):
            last = module
    if last is None:
        raise ValueError("model has no convolutional layers")
    return last


def crack_probabilities(logits: torch.Tensor) -> torch.Tensor:
    return torch.softmax(logits, dim=1)[:, CRACK_INDEX]
