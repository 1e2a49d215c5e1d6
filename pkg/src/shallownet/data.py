"""Dataset ingestion, 80:20 splitting, image decode/resize and augmentation.

Expected layout::

    root/Parasitized/*.png   (label 1)
    root/Uninfected/*.png    (label 0)
"""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError
from .rng import sample_rng

log = logging.getLogger(__name__)

IMAGE_SIZE = 64
CLASS_DIRS = {"parasitized": 1, "uninfected": 0}
LABEL_NAMES = {1: "parasitized", 0: "uninfected"}


@dataclass(frozen=True)
class Sample:
    path: str
    label: int
    split: str = ""  # "train", "test" or "" before splitting


@dataclass(frozen=True)
class DatasetManifest:
    samples: tuple
    seed: int | None = None
    skipped: int = 0

    def __len__(self):
        return len(self.samples)

    @property
    def train(self):
        return [s for s in self.samples if s.split == "train"]

    @property
    def test(self):
        return [s for s in self.samples if s.split == "test"]

    def counts(self):
        out = {}
        for s in self.samples:
            key = (LABEL_NAMES[s.label], s.split or "unsplit")
            out[key] = out.get(key, 0) + 1
        return out


@dataclass(frozen=True)
class AugmentParams:
    rotation_max_deg: float = 20.0
    zoom_range: tuple = (0.9, 1.1)
    hflip_prob: float = 0.5
    vflip_prob: float = 0.5

    def __post_init__(self):
        lo, hi = self.zoom_range
        if not (0 < lo <= hi):
            raise ValueError(f"zoom_range must be positive and ordered, got {self.zoom_range}")
        if not 0 <= self.rotation_max_deg <= 180:
            raise ValueError("rotation_max_deg must lie in [0, 180]")
        for p in (self.hflip_prob, self.vflip_prob):
            if not 0 <= p <= 1:
                raise ValueError("flip probabilities must lie in [0, 1]")


# ------------------------------------------------------------------- ingest

def ingest(root_dir) -> DatasetManifest:
    """Scan ``root_dir`` for the two class folders (case-insensitive names)."""
    root = os.fspath(root_dir)
    if not os.path.isdir(root):
        raise DataError(f"no images: dataset root {root!r} does not exist")
    found = {}
    for entry in os.scandir(root):
        if entry.is_dir() and entry.name.lower() in CLASS_DIRS:
            found[entry.name.lower()] = entry.path
    missing = sorted(set(CLASS_DIRS) - set(found))
    if missing:
        raise DataError(f"no images: {root!r} lacks class director{'ies' if len(missing) > 1 else 'y'} "
                        + ", ".join(m.capitalize() for m in missing))
    samples = []
    skipped = 0
    for name, path in found.items():
        for entry in os.scandir(path):
            if not entry.is_file():
                continue
            if entry.name.lower().endswith(".png"):
                samples.append(Sample(entry.path, CLASS_DIRS[name]))
            else:
                skipped += 1
    if skipped:
        log.warning("skipped %d non-PNG files under %s", skipped, root)
    if not samples:
        raise DataError(f"no images found under {root!r}")
    samples.sort(key=lambda s: s.path)
    return DatasetManifest(tuple(samples), skipped=skipped)


def split(manifest: DatasetManifest, ratio=0.8, seed=0) -> DatasetManifest:
    """Unstratified seeded split; the first ``round(ratio * N)`` of a permutation train."""
    if not 0 < ratio < 1:
        raise ValueError(f"split ratio must lie strictly between 0 and 1, got {ratio}")
    ordered = sorted(manifest.samples, key=lambda s: s.path)
    n = len(ordered)
    n_train = int(math.floor(ratio * n + 0.5))
    if n_train == 0 or n_train == n:
        raise DataError(f"split ratio {ratio} on {n} samples leaves one side empty")
    perm = np.random.default_rng(seed).permutation(n)
    is_train = np.zeros(n, dtype=bool)
    is_train[perm[:n_train]] = True
    samples = tuple(replace(s, split="train" if t else "test") for s, t in zip(ordered, is_train))
    return DatasetManifest(samples, seed=seed, skipped=manifest.skipped)


def write_manifest_csv(manifest: DatasetManifest, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "label", "split"])
        for s in manifest.samples:
            w.writerow([s.path, s.label, s.split])


def read_manifest_csv(path) -> DatasetManifest:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as e:
        raise DataError(f"cannot read manifest {path}: {e}") from e
    try:
        samples = tuple(Sample(r["path"], int(r["label"]), r["split"]) for r in rows)
    except (KeyError, ValueError) as e:
        raise DataError(f"malformed manifest {path}: {e}") from e
    return DatasetManifest(samples)


# ------------------------------------------------------------ decode/resize

def _lerp_axis(n_in, n_out):
    """Half-pixel bilinear source indices and weights, clamped at the edges."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.minimum(np.floor(src).astype(np.intp), max(n_in - 2, 0))
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(img, out_h, out_w):
    """Resize a ``(c, h, w)`` array; same-size input is returned unchanged."""
    img = np.asarray(img)
    c, h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()
    y0, y1, ty = _lerp_axis(h, out_h)
    x0, x1, tx = _lerp_axis(w, out_w)
    src = img.astype(np.float64)
    ty = ty[:, None]
    rows = (1 - ty) * src[:, y0, :] + ty * src[:, y1, :]
    out = (1 - tx) * rows[:, :, x0] + tx * rows[:, :, x1]
    return out.astype(img.dtype if img.dtype.kind == "f" else np.float64)


def load_image(path, size=IMAGE_SIZE):
    """Decode a PNG to a ``(1, 3, size, size)`` float32 tensor in [0, 1]."""
    try:
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise DataError(f"cannot decode image {path}: {e}") from e
    out = resize_bilinear(rgb.transpose(2, 0, 1), size, size)
    return np.clip(out, 0.0, 1.0).astype(np.float32)[None]


def load_images(paths, size=IMAGE_SIZE, threads=1):
    paths = list(paths)
    out = np.empty((len(paths), 3, size, size), dtype=np.float32)

    def work(k):
        out[k] = load_image(paths[k], size)[0]

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            list(ex.map(work, range(len(paths))))
    else:
        for k in range(len(paths)):
            work(k)
    return out


# --------------------------------------------------------------- augmentation

def _sample_affine(img, angle_deg, zoom):
    """Rotate counter-clockwise by ``angle_deg`` then zoom by ``zoom`` about the centre.

    Both steps are folded into one bilinear resample; out-of-range coordinates
    are clamped so the border pixels extend outward.
    """
    c, h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    th = np.deg2rad(angle_deg)
    cos, sin = np.cos(th), np.sin(th)
    dy = (np.arange(h) - cy)[:, None] / zoom
    dx = (np.arange(w) - cx)[None, :] / zoom
    sy = np.clip(cos * dy + sin * dx + cy, 0, h - 1)
    sx = np.clip(cos * dx - sin * dy + cx, 0, w - 1)
    y0 = np.minimum(np.floor(sy).astype(np.intp), h - 2)
    x0 = np.minimum(np.floor(sx).astype(np.intp), w - 2)
    ty, tx = sy - y0, sx - x0
    src = img.astype(np.float64)
    top = (1 - tx) * src[:, y0, x0] + tx * src[:, y0, x0 + 1]
    bot = (1 - tx) * src[:, y0 + 1, x0] + tx * src[:, y0 + 1, x0 + 1]
    return (1 - ty) * top + ty * bot


def augment_with(image, angle_deg=0.0, zoom=1.0, hflip=False, vflip=False):
    """Deterministic augmentation with explicit parameters."""
    image = np.asarray(image)
    squeeze = image.ndim == 4
    img = image[0] if squeeze else image
    if angle_deg != 0.0 or zoom != 1.0:
        out = np.clip(_sample_affine(img, angle_deg, zoom), 0.0, 1.0).astype(img.dtype)
    else:
        out = img.copy()
    if hflip:
        out = out[:, :, ::-1]
    if vflip:
        out = out[:, ::-1, :]
    out = np.ascontiguousarray(out)
    return out[None] if squeeze else out


def augment(image, params: AugmentParams, rng: np.random.Generator):
    """Random rotation, zoom, horizontal and vertical flip, in that order."""
    angle = rng.uniform(-params.rotation_max_deg, params.rotation_max_deg)
    zoom = rng.uniform(*params.zoom_range)
    hflip = rng.random() < params.hflip_prob
    vflip = rng.random() < params.vflip_prob
    return augment_with(image, angle, zoom, hflip, vflip)


def augment_batch(images, params: AugmentParams, seed, epoch, indices):
    """Augment a batch; each sample's draw depends only on (seed, epoch, sample index)."""
    out = np.empty_like(images)
    for k, idx in enumerate(indices):
        out[k] = augment(images[k], params, sample_rng(seed, epoch, int(idx)))
    return out
