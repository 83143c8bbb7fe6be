"""Differentiable operations: convolution, resampling, activations, losses.

Convolutions run as im2col + BLAS matmul; the column matrices are
recomputed in the backward pass instead of stored (memory over compute).
"""

import numpy as np

from .. import _kernels
from .tensor import Tensor, as_tensor

BCE_EPS = 1e-7


def conv_out_hw(h, w, ksize, stride, pad):
    return (h + 2 * pad - ksize) // stride + 1, (w + 2 * pad - ksize) // stride + 1


def conv2d(x, w, b, stride=1, pad=0):
    """Cross-correlation, NCHW. w: (Cout, Cin, k, k), b: (Cout,)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    n, cin, h, wd = x.data.shape
    cout, cin_w, k, k2 = w.data.shape
    if cin != cin_w or k != k2:
        raise ValueError(f"conv2d shape mismatch: input C={cin}, weight {w.data.shape}")
    ho, wo = conv_out_hw(h, wd, k, stride, pad)
    cols = _kernels.im2col(x.data, k, stride, pad)  # (N, Cin*k*k, L)
    wmat = w.data.reshape(cout, -1)
    out = np.matmul(wmat, cols)  # (N, Cout, L)
    out += b.data[None, :, None]
    out = out.reshape(n, cout, ho, wo)

    def backward(g):
        g2 = g.reshape(n, cout, ho * wo)
        if w.requires_grad or b.requires_grad:
            cols_b = _kernels.im2col(x.data, k, stride, pad)
            dw = np.matmul(g2, cols_b.transpose(0, 2, 1)).sum(axis=0).reshape(w.data.shape)
            w.accumulate_grad(dw)
            b.accumulate_grad(g2.sum(axis=(0, 2)))
        if x.requires_grad:
            gcols = np.matmul(wmat.T, g2)  # (N, Cin*k*k, L)
            dx = _kernels.col2im(gcols, n, cin, h, wd, k, stride, pad)
            x.accumulate_grad(dx)

    return Tensor(out, parents=(x, w, b), backward=backward)


_resize_cache = {}


def _resize_matrix(n_in, n_out, dtype):
    """Row-interpolation matrix for align-corners-false bilinear resampling."""
    key = (n_in, n_out, np.dtype(dtype).name)
    m = _resize_cache.get(key)
    if m is None:
        m = np.zeros((n_out, n_in), dtype=np.float64)
        scale = n_in / n_out
        for i in range(n_out):
            src = (i + 0.5) * scale - 0.5
            i0 = int(np.floor(src))
            w1 = src - i0
            i0c = min(max(i0, 0), n_in - 1)
            i1c = min(max(i0 + 1, 0), n_in - 1)
            m[i, i0c] += 1.0 - w1
            m[i, i1c] += w1
        m = m.astype(dtype)
        _resize_cache[key] = m
    return m


def bilinear_resize(x, out_hw):
    """Bilinear resampling of (N,C,H,W) to (N,C,Ho,Wo), align_corners=False."""
    x = as_tensor(x)
    n, c, h, w = x.data.shape
    ho, wo = out_hw
    r = _resize_matrix(h, ho, x.data.dtype)
    cmat = _resize_matrix(w, wo, x.data.dtype)
    out = np.matmul(r, np.matmul(x.data, cmat.T))

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.matmul(r.T, np.matmul(g, cmat)))

    return Tensor(out, parents=(x,), backward=backward)


def bilinear_upsample(x, factor):
    """Integer-factor bilinear upsampling (factor 1 is the identity)."""
    if int(factor) != factor or factor < 1:
        raise ValueError(f"upsample factor must be a positive integer, got {factor}")
    x = as_tensor(x)
    _, _, h, w = x.data.shape
    return bilinear_resize(x, (h * int(factor), w * int(factor)))


def relu(x):
    x = as_tensor(x)
    out = np.maximum(x.data, 0)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * (out > 0))

    return Tensor(out, parents=(x,), backward=backward)


def sigmoid(x):
    x = as_tensor(x)
    pos = x.data >= 0
    z = np.exp(-np.abs(x.data))
    out = np.where(pos, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.data.dtype)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * out * (1.0 - out))

    return Tensor(out, parents=(x,), backward=backward)


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(sl)])

    return Tensor(out, parents=tuple(tensors), backward=backward)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward(g):
        a.accumulate_grad(g)
        b.accumulate_grad(g)

    return Tensor(out, parents=(a, b), backward=backward)


def minimum(a, b):
    """Elementwise min; gradient follows the winning branch (ties -> a)."""
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * take_a)
        if b.requires_grad:
            b.accumulate_grad(g * ~take_a)

    return Tensor(out, parents=(a, b), backward=backward)


def mean(x):
    x = as_tensor(x)
    out = np.asarray(x.data.mean(), dtype=x.data.dtype)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, g / x.data.size))

    return Tensor(out, parents=(x,), backward=backward)


def weighted_sum(x, weights):
    """sum(x * weights) with constant weights; scalar output."""
    x = as_tensor(x)
    warr = np.asarray(weights, dtype=x.data.dtype)
    out = np.asarray((x.data * warr).sum(), dtype=x.data.dtype)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * warr)

    return Tensor(out, parents=(x,), backward=backward)


def _bce_elements(p, t):
    ph = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    vals = -(t * np.log(ph) + (1.0 - t) * np.log(1.0 - ph))
    live = (p > BCE_EPS) & (p < 1.0 - BCE_EPS)
    return ph, vals, live


def bce(pred, target):
    """Mean binary cross-entropy; inputs clamped to [1e-7, 1-1e-7]."""
    pred = as_tensor(pred)
    tarr = np.asarray(target, dtype=pred.data.dtype)
    ph, vals, live = _bce_elements(pred.data, tarr)
    out = np.asarray(vals.mean(), dtype=pred.data.dtype)

    def backward(g):
        if pred.requires_grad:
            dp = (-tarr / ph + (1.0 - tarr) / (1.0 - ph)) * live / pred.data.size
            pred.accumulate_grad(g * dp.astype(pred.data.dtype))

    return Tensor(out, parents=(pred,), backward=backward)


def bce_per_sample(pred, target):
    """Per-sample mean BCE over all non-batch dims: (N,...) -> (N,)."""
    pred = as_tensor(pred)
    tarr = np.asarray(target, dtype=pred.data.dtype)
    n = pred.data.shape[0]
    per = pred.data.size // n
    ph, vals, live = _bce_elements(pred.data, tarr)
    out = vals.reshape(n, -1).mean(axis=1).astype(pred.data.dtype)

    def backward(g):
        if pred.requires_grad:
            dp = (-tarr / ph + (1.0 - tarr) / (1.0 - ph)) * live / per
            shape = (n,) + (1,) * (pred.data.ndim - 1)
            pred.accumulate_grad((g.reshape(shape) * dp).astype(pred.data.dtype))

    return Tensor(out, parents=(pred,), backward=backward)


def epe_masked(pred, target, mask):
    """Mean endpoint error over masked pixels.

    pred: Tensor (N,2,H,W); target: array (N,2,H,W); mask: bool (N,H,W).
    """
    pred = as_tensor(pred)
    tarr = np.asarray(target, dtype=pred.data.dtype)
    marr = np.asarray(mask, dtype=bool)
    count = int(marr.sum())
    if count == 0:
        raise ValueError("epe_masked: empty supervision mask")
    diff = pred.data - tarr
    norm = np.sqrt(diff[:, 0] ** 2 + diff[:, 1] ** 2)  # (N,H,W)
    out = np.asarray(norm[marr].sum() / count, dtype=pred.data.dtype)

    def backward(g):
        if pred.requires_grad:
            denom = np.maximum(norm, 1e-12)
            scale = (marr / denom / count).astype(pred.data.dtype)
            dp = diff * scale[:, None, :, :]
            pred.accumulate_grad(g * dp)

    return Tensor(out, parents=(pred,), backward=backward)


def gaussian_image(center_uv, sigma, hw=(200, 200), dtype=np.float32):
    """exp(-r^2 / 2 sigma^2) falloff around an integer pixel, peak exactly 1."""
    h, w = hw
    u0, v0 = float(center_uv[0]), float(center_uv[1])
    vs = np.arange(h, dtype=np.float64)[:, None]
    us = np.arange(w, dtype=np.float64)[None, :]
    r2 = (us - u0) ** 2 + (vs - v0) ** 2
    return np.exp(-r2 / (2.0 * sigma * sigma)).astype(dtype)
