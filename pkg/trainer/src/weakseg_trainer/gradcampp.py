"""GradCAM++ over the crack logit at the deepest convolutional layer.

Uses the closed-form weights built from powers of the first derivative:

    alpha = g^2 / (2 g^2 + sum_spatial(A) * g^3)
    w_k   = sum_spatial(alpha * relu(g))
    cam   = relu(sum_k w_k A_k), max-normalized to [0, 1]
"""

from __future__ import annotations

import numpy as np
import torch

from .models import CRACK_INDEX, last_conv_layer


def gradcam_pp(model: torch.nn.Module, x: torch.Tensor) -> np.ndarray:
    """Activation map for a single (1, C, H, W) input at feature resolution."""
    if x.ndim != 4 or x.shape[0] != 1:
        raise ValueError(f"expected a single (1,C,H,W) input, got {tuple(x.shape)}")
    model.eval()
    target = last_conv_layer(model)
    store = {}

    def fwd_hook(_module, _inp, out):
        store["activation"] = out

    handle = target.register_forward_hook(fwd_hook)
    try:
        logits = model(x)
        score = logits[0, CRACK_INDEX]
        activation = store["activation"]
        grads = torch.autograd.grad(score, activation)[0]
    finally:
        handle.remove()

    a = activation.detach()[0]  # (K, u, v)
    g = grads.detach()[0]
    g2 = g * g
    g3 = g2 * g
    spatial_sum = a.sum(dim=(1, 2), keepdim=True)
    denom = 2.0 * g2 + spatial_sum * g3
    alpha = torch.where(denom.abs() > 1e-12, g2 / denom, torch.zeros_like(g2))
    weights = (alpha * torch.relu(g)).sum(dim=(1, 2))
    cam = torch.relu((weights[:, None, None] * a).sum(dim=0))
    cam = cam.numpy().astype(np.float64)
    peak = cam.max()
    if peak > 0:
        cam /= peak
    return cam
