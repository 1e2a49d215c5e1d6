"""Hot inner loops: matmul, im2col/col2im for 3x3 same convolution, 2x2 max pooling.

Every kernel has a numba implementation (``*_nb``) and a pure-numpy one
(``*_np``).  The module-level names dispatch to one of them according to
``SHALLOWNET_DISABLE_NUMBA``.  Both produce bit-identical results; the
accumulation order in col2im and matmul is the same in each path.
"""
from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit

K = 3  # kernel extent
PAD = 1


# --------------------------------------------------------------------- matmul

@njit
def matmul_nb(a, b):
    m, k = a.shape
    n = b.shape[1]
    c = np.zeros((m, n), dtype=a.dtype)
    for i in range(m):
        for p in range(k):
            aip = a[i, p]
            for j in range(n):
                c[i, j] += aip * b[p, j]
    return c


def matmul_np(a, b):
    m, k = a.shape
    c = np.zeros((m, b.shape[1]), dtype=a.dtype)
    for p in range(k):
        c += a[:, p:p + 1] * b[p]
    return c


# --------------------------------------------------------------------- im2col

@njit
def im2col_nb(x):
    n, c, h, w = x.shape
    cols = np.zeros((c * K * K, n * h * w), dtype=x.dtype)
    for ci in range(c):
        for ky in range(K):
            for kx in range(K):
                row = (ci * K + ky) * K + kx
                for b in range(n):
                    base = b * h * w
                    for y in range(h):
                        sy = y + ky - PAD
                        if sy < 0 or sy >= h:
                            continue
                        for xx in range(w):
                            sx = xx + kx - PAD
                            if sx >= 0 and sx < w:
                                cols[row, base + y * w + xx] = x[b, ci, sy, sx]
    return cols


def im2col_np(x):
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (PAD, PAD), (PAD, PAD)))
    cols = np.empty((c, K, K, n, h, w), dtype=x.dtype)
    for ky in range(K):
        for kx in range(K):
            cols[:, ky, kx] = xp[:, :, ky:ky + h, kx:kx + w].transpose(1, 0, 2, 3)
    return cols.reshape(c * K * K, n * h * w)


@njit
def col2im_nb(cols, n, c, h, w):
    x = np.zeros((n, c, h, w), dtype=cols.dtype)
    for ci in range(c):
        for ky in range(K):
            for kx in range(K):
                row = (ci * K + ky) * K + kx
                for b in range(n):
                    base = b * h * w
                    for y in range(h):
                        sy = y + ky - PAD
                        if sy < 0 or sy >= h:
                            continue
                        for xx in range(w):
                            sx = xx + kx - PAD
                            if sx >= 0 and sx < w:
                                x[b, ci, sy, sx] += cols[row, base + y * w + xx]
    return x


def col2im_np(cols, n, c, h, w):
    xp = np.zeros((n, c, h + 2 * PAD, w + 2 * PAD), dtype=cols.dtype)
    view = cols.reshape(c, K, K, n, h, w)
    for ky in range(K):
        for kx in range(K):
            xp[:, :, ky:ky + h, kx:kx + w] += view[:, ky, kx].transpose(1, 0, 2, 3)
    return np.ascontiguousarray(xp[:, :, PAD:PAD + h, PAD:PAD + w])


# -------------------------------------------------------------------- maxpool

@njit
def maxpool_nb(x):
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    out = np.empty((n, c, ho, wo), dtype=x.dtype)
    arg = np.empty((n, c, ho, wo), dtype=np.int32)
    for b in range(n):
        for ci in range(c):
            for i in range(ho):
                for j in range(wo):
                    best = x[b, ci, 2 * i, 2 * j]
                    idx = (2 * i) * w + 2 * j
                    for dy in range(2):
                        for dx in range(2):
                            v = x[b, ci, 2 * i + dy, 2 * j + dx]
                            if v > best:
                                best = v
                                idx = (2 * i + dy) * w + 2 * j + dx
                    out[b, ci, i, j] = best
                    arg[b, ci, i, j] = idx
    return out, arg


def maxpool_np(x):
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    win = x.reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    k = np.argmax(win, axis=-1)  # first occurrence wins ties
    out = np.take_along_axis(win, k[..., None], axis=-1)[..., 0]
    rows = 2 * np.arange(ho)[:, None] + k // 2
    cols = 2 * np.arange(wo)[None, :] + k % 2
    return np.ascontiguousarray(out), (rows * w + cols).astype(np.int32)


@njit
def maxpool_backward_nb(arg, grad_out, h, w):
    n, c, ho, wo = grad_out.shape
    gx = np.zeros((n, c, h, w), dtype=grad_out.dtype)
    for b in range(n):
        for ci in range(c):
            for i in range(ho):
                for j in range(wo):
                    idx = arg[b, ci, i, j]
                    gx[b, ci, idx // w, idx % w] += grad_out[b, ci, i, j]
    return gx


def maxpool_backward_np(arg, grad_out, h, w):
    n, c = grad_out.shape[:2]
    gx = np.zeros((n, c, h * w), dtype=grad_out.dtype)
    np.put_along_axis(gx, arg.reshape(n, c, -1).astype(np.intp), grad_out.reshape(n, c, -1), axis=-1)
    return gx.reshape(n, c, h, w)


if USE_NUMBA:
    matmul, im2col, col2im = matmul_nb, im2col_nb, col2im_nb
    maxpool, maxpool_backward = maxpool_nb, maxpool_backward_nb
else:
    matmul, im2col, col2im = matmul_np, im2col_np, col2im_np
    maxpool, maxpool_backward = maxpool_np, maxpool_backward_np
