"""Neural-network kernels on :class:`~morphlab.tensor.Tensor`.

Image tensors are laid out ``(N, C, H, W)``. Convolutions use zero padding
that preserves spatial extent at unit stride; resampling is by a factor of
two only.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import Tensor, _check_finite, add, as_tensor, kernel, matmul

LEAKY_SLOPE = 0.2
NORM_EPS = 1e-8


def leaky_relu(x, slope: float = LEAKY_SLOPE) -> Tensor:
    x = as_tensor(x)
    _check_finite("leaky_relu", (x,))
    scale = np.where(x.data > 0, 1.0, slope).astype(x.dtype)
    return kernel("leaky_relu", (x,), x.data * scale, lambda g: (g * scale,))


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    _check_finite("softmax", (x,))
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    return kernel("softmax", (x,), y,
                  lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def feature_normalize(x, axes=(2, 3), eps: float = NORM_EPS) -> Tensor:
    """Zero-mean, unit-variance per channel over ``axes``."""
    x = as_tensor(x)
    if eps <= 0:
        raise ConfigError("feature_normalize: eps must be positive")
    _check_finite("feature_normalize", (x,))
    axes = tuple(axes)
    mu = x.data.mean(axis=axes, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv

    def back(g):
        gm = g.mean(axis=axes, keepdims=True)
        gym = (g * y).mean(axis=axes, keepdims=True)
        return (inv * (g - gm - y * gym),)

    return kernel("feature_normalize", (x,), y, back)


def linear(x, weight, bias=None) -> Tensor:
    """Row-wise affine map ``x @ weight + bias``."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def _upsample_matrix(n: int, dtype) -> np.ndarray:
    # half-pixel centers, edge clamped
    u = np.zeros((2 * n, n), dtype=dtype)
    for i in range(2 * n):
        src = min(max((i + 0.5) / 2 - 0.5, 0.0), n - 1.0)
        lo = int(np.floor(src))
        hi = min(lo + 1, n - 1)
        w = src - lo
        u[i, lo] += 1 - w
        u[i, hi] += w
    return u


def bilinear_upsample2x(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim < 2:
        raise ShapeError(f"bilinear_upsample2x: need at least 2 dims, got {x.shape}")
    _check_finite("bilinear_upsample2x", (x,))
    uh = _upsample_matrix(x.shape[-2], x.dtype)
    uw = _upsample_matrix(x.shape[-1], x.dtype)
    out = uh @ x.data @ uw.T
    return kernel("bilinear_upsample2x", (x,), out, lambda g: (uh.T @ g @ uw,))


def conv2d(x, weight, bias=None, stride: int = 1, up: bool = False,
           down: bool = False) -> Tensor:
    """2-D cross-correlation with 'same' zero padding.

    ``up`` bilinearly doubles the input before convolving; ``down`` uses
    stride 2.
    """
    if up and down:
        raise ConfigError("conv2d: up and down are exclusive")
    x, weight = as_tensor(x), as_tensor(weight)
    if up:
        x = bilinear_upsample2x(x)
    if down:
        stride = 2
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d: incompatible shapes {x.shape} and {weight.shape}")
    kh, kw = weight.shape[2:]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel extents must be odd, got {weight.shape}")
    _check_finite("conv2d", (x, weight))
    n, c, h, w = x.shape
    ph, pw = kh // 2, kw // 2
    ho = (h + 2 * ph - kh) // stride + 1
    wo = (w + 2 * pw - kw) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=np.result_type(x.dtype, weight.dtype))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    cols = cols.reshape(n, c * kh * kw, ho * wo)
    wmat = weight.data.reshape(weight.shape[0], -1)
    out = (wmat @ cols).reshape(n, weight.shape[0], ho, wo)
    wshape = weight.shape

    def back(g):
        g2 = g.reshape(n, wshape[0], ho * wo)
        gw = np.einsum("nol,nkl->ok", g2, cols).reshape(wshape)
        gcols = (wmat.T @ g2).reshape(n, c, kh, kw, ho, wo)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, :, i, j]
        return gxp[:, :, ph:ph + h, pw:pw + w], gw

    out = kernel("conv2d", (x, weight), out, back)
    if bias is not None:
        out = add(out, as_tensor(bias).reshape(1, -1, 1, 1))
    return out


def affine_warp(x, theta) -> Tensor:
    """Resample ``x`` through a 2x3 spatial affine map with bilinear weights.

    Coordinates are normalized to [-1, 1] at pixel centers; samples outside
    the grid are clamped to the border. The identity matrix reproduces the
    input.
    """
    x, theta = as_tensor(x), as_tensor(theta)
    if x.ndim != 4 or theta.shape != (2, 3):
        raise ShapeError(f"affine_transform: incompatible shapes {x.shape} and {theta.shape}")
    _check_finite("affine_transform", (x, theta))
    n, c, h, w = x.shape
    th = theta.data
    v, u = np.meshgrid((2 * np.arange(h) + 1) / h - 1, (2 * np.arange(w) + 1) / w - 1,
                       indexing="ij")
    us = th[0, 0] * u + th[0, 1] * v + th[0, 2]
    vs = th[1, 0] * u + th[1, 1] * v + th[1, 2]
    px_raw = ((us + 1) * w - 1) / 2
    py_raw = ((vs + 1) * h - 1) / 2
    # snap round-off so the identity map samples exactly on pixel centers
    px_raw = np.where(np.abs(px_raw - np.round(px_raw)) < 1e-9, np.round(px_raw), px_raw)
    py_raw = np.where(np.abs(py_raw - np.round(py_raw)) < 1e-9, np.round(py_raw), py_raw)
    inside_x = (px_raw >= 0) & (px_raw <= w - 1)
    inside_y = (py_raw >= 0) & (py_raw <= h - 1)
    px = np.clip(px_raw, 0, w - 1)
    py = np.clip(py_raw, 0, h - 1)
    x0 = np.minimum(np.floor(px).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(py).astype(np.intp), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = px - x0
    wy = py - y0
    xd = x.data
    v00, v01 = xd[:, :, y0, x0], xd[:, :, y0, x1]
    v10, v11 = xd[:, :, y1, x0], xd[:, :, y1, x1]
    out = ((1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11))

    def back(g):
        gx = np.zeros_like(xd)
        by_pos = gx.reshape(n, c, h * w).transpose(2, 0, 1)
        gpos = g.reshape(n, c, h * w).transpose(2, 0, 1)
        for yy, xx, wt in ((y0, x0, (1 - wy) * (1 - wx)), (y0, x1, (1 - wy) * wx),
                           (y1, x0, wy * (1 - wx)), (y1, x1, wy * wx)):
            idx = (yy * w + xx).reshape(-1)
            np.add.at(by_pos, idx, gpos * wt.reshape(-1, 1, 1))
        dpx = ((1 - wy) * (v01 - v00) + wy * (v11 - v10)) * inside_x * (w / 2)
        dpy = ((1 - wx) * (v10 - v00) + wx * (v11 - v01)) * inside_y * (h / 2)
        sx = (g * dpx).sum(axis=(0, 1))
        sy = (g * dpy).sum(axis=(0, 1))
        gtheta = np.array([[(sx * u).sum(), (sx * v).sum(), sx.sum()],
                           [(sy * u).sum(), (sy * v).sum(), sy.sum()]], dtype=theta.dtype)
        return gx, gtheta

    return kernel("affine_transform", (x, theta), out, back)
