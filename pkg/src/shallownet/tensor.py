"""Dense NCHW tensors as plain numpy arrays.

A tensor is a C-contiguous 4-D ``float32`` array (``float64`` in the
gradient-check shadow mode).  Values produced by :func:`tensor` are read-only
so they can be shared between threads.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ShapeError

Tensor = np.ndarray

DTYPE = np.float32
SHADOW_DTYPE = np.float64


def tensor(data, dtype=DTYPE) -> Tensor:
    arr = np.array(data, dtype=dtype, order="C", copy=True)
    if arr.ndim != 4:
        raise ShapeError(f"tensor must be 4-D (n, c, h, w), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor values must be finite")
    arr.flags.writeable = False
    return arr


def zeros(shape, dtype=DTYPE) -> Tensor:
    if len(shape) != 4:
        raise ShapeError(f"tensor must be 4-D (n, c, h, w), got shape {tuple(shape)}")
    return np.zeros(shape, dtype=dtype)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with a fixed left-to-right summation order over the inner axis.

    Bit-reproducible for identical inputs regardless of BLAS threading.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    dtype = np.result_type(a.dtype, b.dtype)
    if dtype not in (np.float32, np.float64):
        dtype = np.float64
    a = np.ascontiguousarray(a, dtype=dtype)
    b = np.ascontiguousarray(b, dtype=dtype)
    return kernels.matmul(a, b)


def map(t: np.ndarray, f) -> np.ndarray:  # noqa: A001 - mirrors the functional name
    """Apply scalar function ``f`` elementwise.

    ``f`` may be a numpy ufunc / vectorised callable or a plain scalar function.
    """
    t = np.asarray(t)
    try:
        out = f(t)
        if not isinstance(out, np.ndarray) or out.shape != t.shape:
            raise TypeError
    except (TypeError, ValueError):
        out = np.vectorize(f, otypes=[t.dtype])(t)
    return np.asarray(out, dtype=t.dtype)


def relu(x):
    return np.maximum(x, 0)


def sigmoid(x):
    """Numerically stable logistic function (separate branches by sign)."""
    x = np.asarray(x)
    out = np.empty_like(x, dtype=np.result_type(x.dtype, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out
