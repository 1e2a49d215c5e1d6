"""Synthetic thin-smear cell images for fixtures, demos and smoke tests.

Cells are pale pink discs on black, matching the look of segmented smear
crops; parasitized cells carry one or two dark purple inclusions.  Not a
substitute for the real dataset.
"""
from __future__ import annotations

import os

import numpy as np
from PIL import Image


def cell_image(rng, parasitized, size=None):
    """One ``(h, w, 3)`` uint8 image."""
    size = size or int(rng.integers(96, 150))
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cy, cx = h / 2 + rng.normal(0, size * 0.02), w / 2 + rng.normal(0, size * 0.02)
    ry, rx = size * rng.uniform(0.36, 0.45), size * rng.uniform(0.36, 0.45)
    inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    base = np.array([0.85, 0.62, 0.60]) + rng.normal(0, 0.03, 3)
    img = np.zeros((h, w, 3))
    shade = 1.0 - 0.12 * (((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    img[inside] = (base[None, :] * shade[inside][:, None])
    img[inside] += rng.normal(0, 0.02, (int(inside.sum()), 3))
    if parasitized:
        for _ in range(int(rng.integers(1, 3))):
            r = size * rng.uniform(0.06, 0.11)
            py = cy + rng.uniform(-0.4, 0.4) * ry
            px = cx + rng.uniform(-0.4, 0.4) * rx
            blob = (yy - py) ** 2 + (xx - px) ** 2 <= r * r
            img[blob & inside] = np.array([0.42, 0.20, 0.48]) + rng.normal(0, 0.03, 3)
    return (np.clip(img, 0, 1) * 255).astype(np.uint8)


def write_dataset(root, n_per_class, seed=0, size=None):
    """Create ``root/Parasitized`` and ``root/Uninfected`` with PNG cells."""
    rng = np.random.default_rng(seed)
    for name, label in (("Parasitized", True), ("Uninfected", False)):
        d = os.path.join(root, name)
        os.makedirs(d, exist_ok=True)
        for k in range(n_per_class):
            Image.fromarray(cell_image(rng, label, size)).save(os.path.join(d, f"cell_{k:05d}.png"))
    return root


def arrays(n_per_class, seed=0, image_size=64):
    """In-memory ``(images, labels)`` at network resolution, classes interleaved."""
    from .data import resize_bilinear
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for k in range(2 * n_per_class):
        lab = k % 2
        rgb = cell_image(rng, bool(lab)).astype(np.float64).transpose(2, 0, 1) / 255.0
        images.append(resize_bilinear(rgb, image_size, image_size))
        labels.append(lab)
    return np.asarray(images, dtype=np.float32), np.asarray(labels)
