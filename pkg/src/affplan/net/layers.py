"""Differentiable primitives with explicit backward passes.

Everything is plain numpy on NHWC arrays.  Convolutions run as im2col
matmuls; their input gradient is built from nine strided scatter-adds, one
per kernel tap, which keeps the backward pass BLAS-bound instead of looping
over pixels.  All functions preserve the dtype of their inputs so the same
code paths run in float32 for training and float64 for gradient checking.
"""

from __future__ import annotations

import numpy as np


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int,
           dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def dense_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def dense_bwd(x: np.ndarray, w: np.ndarray, gy: np.ndarray):
    return gy @ w.T, x.T @ gy, gy.sum(axis=0)


def tanh_bwd(activation: np.ndarray, ga: np.ndarray) -> np.ndarray:
    return ga * (1.0 - activation * activation)


def _im2col(x: np.ndarray, k: int, stride: int, pad: int):
    b, h, w, c = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    cols = np.empty((b, ho, wo, k * k, c), dtype=x.dtype)
    for di in range(k):
        for dj in range(k):
            cols[:, :, :, di * k + dj, :] = \
                xp[:, di:di + stride * ho:stride, dj:dj + stride * wo:stride, :]
    return cols.reshape(b * ho * wo, k * k * c), (ho, wo)


def conv_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int, pad: int):
    """x (B,H,W,Cin), w (k,k,Cin,Cout) -> y (B,Ho,Wo,Cout) plus im2col cache."""
    k = w.shape[0]
    cols, (ho, wo) = _im2col(x, k, stride, pad)
    y = cols @ w.reshape(-1, w.shape[3]) + b
    return y.reshape(x.shape[0], ho, wo, w.shape[3]), cols


def conv_bwd(x_shape, cols: np.ndarray, w: np.ndarray, gy: np.ndarray,
             stride: int, pad: int):
    b, h, wd, cin = x_shape
    k, cout = w.shape[0], w.shape[3]
    ho, wo = gy.shape[1], gy.shape[2]
    gy_mat = gy.reshape(-1, cout)
    gw = (cols.T @ gy_mat).reshape(w.shape)
    gb = gy_mat.sum(axis=0)
    gxp = np.zeros((b, h + 2 * pad, wd + 2 * pad, cin), dtype=gy.dtype)
    for di in range(k):
        for dj in range(k):
            tap = w[di, dj]                       # (Cin, Cout)
            contrib = gy @ tap.T                  # (B, Ho, Wo, Cin)
            gxp[:, di:di + stride * ho:stride,
                dj:dj + stride * wo:stride, :] += contrib
    gx = gxp[:, pad:pad + h, pad:pad + wd, :]
    return gx, gw, gb


def upsample2_fwd(x: np.ndarray) -> np.ndarray:
    return x.repeat(2, axis=1).repeat(2, axis=2)


def upsample2_bwd(gy: np.ndarray) -> np.ndarray:
    b, h, w, c = gy.shape
    return gy.reshape(b, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))


def clamp01_fwd(x: np.ndarray):
    return np.clip(x, 0.0, 1.0), (x > 0.0) & (x < 1.0)


def clamp01_bwd(pass_mask: np.ndarray, gy: np.ndarray) -> np.ndarray:
    return gy * pass_mask
