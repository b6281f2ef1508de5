"""Low-level 3D network primitives with explicit forward/backward pairs.

All operators work on arrays shaped (batch, channels, x, y, z), keep the
dtype of their inputs (float32 for training, float64 for verification),
and run single-threaded with fixed-order reductions so repeated runs are
bit-identical.

Convolutions contract a strided sliding-window view of the padded input
against the kernel (einsum with an optimized path), so nothing the size
of an unrolled im2col matrix is ever materialized; the backward pass
scatters per-tap products back with k^3 strided adds. The stride-2
transposed convolution has kernel 2, so every output voxel receives
exactly one kernel tap and both directions reduce to one contraction.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv3d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray,
                   stride: int = 1, padding: int = 1):
    """Cross-correlation with zero padding.

    x: (B, Ci, X, Y, Z); w: (Co, Ci, k, k, k); b: (Co,).
    Returns (y, cache) with y: (B, Co, ox, oy, oz).
    """
    if padding:
        p = padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p), (p, p)))
    else:
        xp = x
    k = w.shape[2]
    win = sliding_window_view(xp, (k, k, k), axis=(2, 3, 4))
    if stride > 1:
        win = win[:, :, ::stride, ::stride, ::stride]
    y = np.einsum("bcxyzijk,ocijk->boxyz", win, w, optimize=True)
    y += b[:, None, None, None]
    cache = (xp, w, x.shape, stride, padding)
    return y, cache


def conv3d_backward(dy: np.ndarray, cache):
    """Gradients of conv3d_forward. Returns (dx, dw, db)."""
    xp, w, xshape, stride, padding = cache
    B, Ci, X, Y, Z = xshape
    k = w.shape[2]
    ox, oy, oz = dy.shape[2:]
    win = sliding_window_view(xp, (k, k, k), axis=(2, 3, 4))
    if stride > 1:
        win = win[:, :, ::stride, ::stride, ::stride]
    dw = np.einsum("boxyz,bcxyzijk->ocijk", dy, win, optimize=True)
    db = dy.sum(axis=(0, 2, 3, 4))

    # d(input): route each kernel tap's contribution back to the padded
    # grid; tap-major layout makes every add read a contiguous block.
    dtap = np.einsum("boxyz,ocijk->ijkbcxyz", dy, w, optimize=True)
    dxp = np.zeros(xp.shape, dtype=dy.dtype)
    s = stride
    for i in range(k):
        for j in range(k):
            for l in range(k):
                dxp[:, :,
                    i:i + s * ox:s,
                    j:j + s * oy:s,
                    l:l + s * oz:s] += dtap[i, j, l]
    p = padding
    if p:
        dx = np.ascontiguousarray(dxp[:, :, p:p + X, p:p + Y, p:p + Z])
    else:
        dx = dxp
    return dx, dw, db


def transpconv3d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Transposed convolution, kernel 2, stride 2: doubles each spatial dim.

    x: (B, Ci, X, Y, Z); w: (Ci, Co, 2, 2, 2); b: (Co,).
    """
    B, Ci, X, Y, Z = x.shape
    Co = w.shape[1]
    y8 = np.einsum("bcxyz,coijk->boxiyjzk", x, w, optimize=True)
    y = y8.reshape(B, Co, 2 * X, 2 * Y, 2 * Z)  # merges adjacent axes; no copy
    y += b[:, None, None, None]
    return y, (x, w)


def transpconv3d_backward(dy: np.ndarray, cache):
    x, w = cache
    B, Ci, X, Y, Z = x.shape
    Co = w.shape[1]
    dy8 = dy.reshape(B, Co, X, 2, Y, 2, Z, 2)
    dx = np.einsum("boxiyjzk,coijk->bcxyz", dy8, w, optimize=True)
    dw = np.einsum("bcxyz,boxiyjzk->coijk", x, dy8, optimize=True)
    db = dy.sum(axis=(0, 2, 3, 4))
    return dx, dw, db


def instance_norm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                          eps: float = 1e-5):
    """Per-sample, per-channel standardization with learnable affine.

    Returns (y, cache); cache retains the normalized activations for the
    backward pass and for the normalization-statistics debug hook.
    """
    mu = x.mean(axis=(2, 3, 4), keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=(2, 3, 4), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    xhat = xc
    xhat *= inv_std
    y = gamma[:, None, None, None] * xhat + beta[:, None, None, None]
    return y, (xhat, inv_std, gamma)


def instance_norm_backward(dy: np.ndarray, cache):
    xhat, inv_std, gamma = cache
    dgamma = (dy * xhat).sum(axis=(0, 2, 3, 4))
    dbeta = dy.sum(axis=(0, 2, 3, 4))
    dxhat = dy * gamma[:, None, None, None]
    m1 = dxhat.mean(axis=(2, 3, 4), keepdims=True)
    m2 = (dxhat * xhat).mean(axis=(2, 3, 4), keepdims=True)
    dx = inv_std * (dxhat - m1 - xhat * m2)
    return dx, dgamma, dbeta


def leaky_relu_forward(x: np.ndarray, slope: float = 0.01):
    neg = x < 0
    y = x.copy()
    np.multiply(y, np.asarray(slope, dtype=x.dtype), out=y, where=neg)
    return y, (neg, slope)


def leaky_relu_backward(dy: np.ndarray, cache):
    neg, slope = cache
    dx = dy.copy()
    np.multiply(dx, np.asarray(slope, dtype=dy.dtype), out=dx, where=neg)
    return dx


def concat_channels(a: np.ndarray, b: np.ndarray):
    return np.concatenate([a, b], axis=1), a.shape[1]


def split_channels(dy: np.ndarray, first_channels: int):
    return dy[:, :first_channels], dy[:, first_channels:]


def softmax_channels(logits: np.ndarray) -> np.ndarray:
    """Stable channel-axis softmax: per-voxel values sum to 1."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)
