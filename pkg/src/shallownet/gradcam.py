"""Grad-CAM heatmaps over the last convolutional block and overlay rendering."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import nn
from .data import resize_bilinear
from .errors import ShapeError


@dataclass
class Heatmap:
    values: np.ndarray      # (H, W) in [0, 1]
    source_layer: int       # layer whose output supplied the activation maps
    raw: np.ndarray         # ReLU(sum_k alpha_k A^k) before upsampling/normalisation
    weights: np.ndarray     # alpha_k, one per channel
    degenerate: bool = False


def activation_layer(spec: nn.ModelSpec) -> int:
    """Index of the last conv layer's activation output (its ReLU when present)."""
    convs = spec.conv_indices()
    if not convs:
        raise ValueError("Grad-CAM needs a model with at least one conv2d layer")
    i = convs[-1]
    if i + 1 < len(spec.layers) and spec.layers[i + 1].kind == "relu":
        i += 1
    return i


def gradcam(model: nn.Model, image, target="parasitized") -> Heatmap:
    """Class activation map for one image ``(1, 3, H, W)``.

    The target score is the pre-sigmoid logit; ``target="uninfected"`` uses
    its negation.
    """
    image = np.asarray(image)
    if image.ndim == 3:
        image = image[None]
    if image.shape[0] != 1:
        raise ShapeError(f"gradcam takes a single image, got batch of {image.shape[0]}")
    if target not in ("parasitized", "uninfected"):
        raise ValueError(f"unknown target {target!r}")
    layer = activation_layer(model.spec)
    _, cache = nn.forward(model, image)
    sign = 1.0 if target == "parasitized" else -1.0
    _, grad = nn.backprop(model, cache, np.array([sign]), stop_after=layer)
    acts = cache.inputs[layer + 1][0]  # (k, h, w)
    grad = grad[0]
    alpha = grad.mean(axis=(1, 2))
    raw = np.maximum(np.tensordot(alpha, acts, axes=1), 0)
    h, w = model.spec.input_shape[1:]
    up = np.maximum(resize_bilinear(raw[None].astype(np.float64), h, w)[0], 0)
    peak = up.max()
    if peak > 0:
        return Heatmap(up / peak, layer, raw, alpha)
    return Heatmap(np.zeros((h, w)), layer, raw, alpha, degenerate=True)


def colormap(values):
    """Blue (0) through green (0.5) to red (1); returns ``(..., 3)`` floats."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0, 1)
    r = np.clip(2 * v - 1, 0, 1)
    b = np.clip(1 - 2 * v, 0, 1)
    g = 1 - r - b
    return np.stack([r, g, b], axis=-1)


def overlay(heatmap, original, alpha=0.4):
    """Alpha-blend the coloured heatmap over ``original``; returns ``(H, W, 3)`` in [0, 1].

    ``original`` may be ``(1, 3, H, W)``, ``(3, H, W)`` or ``(H, W, 3)``.
    """
    values = heatmap.values if isinstance(heatmap, Heatmap) else np.asarray(heatmap)
    img = np.asarray(original, dtype=np.float64)
    if img.ndim == 4:
        img = img[0]
    if img.ndim == 3 and img.shape[0] == 3 and img.shape[-1] != 3:
        img = img.transpose(1, 2, 0)
    if img.shape[:2] != values.shape:
        raise ShapeError(f"heatmap {values.shape} does not match image {img.shape[:2]}")
    if alpha == 0:
        return img.copy()
    return (1 - alpha) * img + alpha * colormap(values)


def to_uint8(rgb):
    return np.round(np.clip(rgb, 0, 1) * 255).astype(np.uint8)


def write_outputs(heatmap: Heatmap, original, out_dir, stem, alpha=0.4):
    """Write ``<stem>_cam.png`` and ``<stem>_cam.csv``; returns both paths."""
    png = os.path.join(out_dir, f"{stem}_cam.png")
    csv_path = os.path.join(out_dir, f"{stem}_cam.csv")
    Image.fromarray(to_uint8(overlay(heatmap, original, alpha))).save(png)
    np.savetxt(csv_path, heatmap.values, delimiter=",", fmt="%.8g")
    return png, csv_path
