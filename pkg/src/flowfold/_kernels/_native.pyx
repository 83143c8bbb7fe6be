# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the hot kernels.

Mirrors fallback.py exactly: same operation order, same expression trees,
so results are bit-identical to the numpy backend (built with
-ffp-contract=off to keep FMA out of the picture).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor, sqrt

cnp.import_array()

BACKEND_NAME = "native"

ctypedef fused floating:
    float
    double


def accumulate_spring_forces(
    double[:, ::1] positions,
    int[::1] idx_a,
    int[::1] idx_b,
    double[::1] rest,
    double[::1] stiffness,
    double[:, ::1] out,
):
    cdef Py_ssize_t s, n = idx_a.shape[0]
    cdef int a, b
    cdef double dx, dy, dz, length, scale
    cdef cnp.ndarray[double, ndim=2] f = np.empty((n, 3), dtype=np.float64)
    cdef double[:, ::1] fv = f
    for s in range(n):
        a = idx_a[s]
        b = idx_b[s]
        dx = positions[b, 0] - positions[a, 0]
        dy = positions[b, 1] - positions[a, 1]
        dz = positions[b, 2] - positions[a, 2]
        length = sqrt(dx * dx + dy * dy + dz * dz)
        if length > 1e-12:
            scale = stiffness[s] * (length - rest[s]) / length
        else:
            scale = 0.0
        fv[s, 0] = scale * dx
        fv[s, 1] = scale * dy
        fv[s, 2] = scale * dz
    for s in range(n):
        a = idx_a[s]
        out[a, 0] += fv[s, 0]
        out[a, 1] += fv[s, 1]
        out[a, 2] += fv[s, 2]
    for s in range(n):
        b = idx_b[s]
        out[b, 0] -= fv[s, 0]
        out[b, 1] -= fv[s, 1]
        out[b, 2] -= fv[s, 2]
    return np.asarray(out)


def rasterize_triangles(
    double[:, ::1] uv,
    double[::1] depth,
    int[:, ::1] triangles,
    int height,
    int width,
):
    cdef cnp.ndarray[double, ndim=2] zbuf_arr = np.full((height, width), np.inf)
    cdef double[:, ::1] zbuf = zbuf_arr
    cdef Py_ssize_t t, ntri = triangles.shape[0]
    cdef int i0, i1, i2, umin, umax, vmin, vmax, ui, vi
    cdef double u0, v0, u1, v1, u2, v2, d0, d1, d2, area
    cdef double uu, vv, w0, w1, w2, z, lo, hi
    for t in range(ntri):
        i0 = triangles[t, 0]
        i1 = triangles[t, 1]
        i2 = triangles[t, 2]
        u0 = uv[i0, 0]
        v0 = uv[i0, 1]
        u1 = uv[i1, 0]
        v1 = uv[i1, 1]
        u2 = uv[i2, 0]
        v2 = uv[i2, 1]
        d0 = depth[i0]
        d1 = depth[i1]
        d2 = depth[i2]
        if d0 <= 0.0 or d1 <= 0.0 or d2 <= 0.0:
            continue
        area = (u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0)
        if area == 0.0:
            continue
        lo = u0
        if u1 < lo:
            lo = u1
        if u2 < lo:
            lo = u2
        hi = u0
        if u1 > hi:
            hi = u1
        if u2 > hi:
            hi = u2
        umin = <int>ceil(lo)
        umax = <int>floor(hi)
        if umin < 0:
            umin = 0
        if umax > width - 1:
            umax = width - 1
        lo = v0
        if v1 < lo:
            lo = v1
        if v2 < lo:
            lo = v2
        hi = v0
        if v1 > hi:
            hi = v1
        if v2 > hi:
            hi = v2
        vmin = <int>ceil(lo)
        vmax = <int>floor(hi)
        if vmin < 0:
            vmin = 0
        if vmax > height - 1:
            vmax = height - 1
        if umin > umax or vmin > vmax:
            continue
        for vi in range(vmin, vmax + 1):
            vv = <double>vi
            for ui in range(umin, umax + 1):
                uu = <double>ui
                w0 = ((u1 - uu) * (v2 - vv) - (u2 - uu) * (v1 - vv)) / area
                w1 = ((u2 - uu) * (v0 - vv) - (u0 - uu) * (v2 - vv)) / area
                w2 = ((u0 - uu) * (v1 - vv) - (u1 - uu) * (v0 - vv)) / area
                if w0 >= 0.0 and w1 >= 0.0 and w2 >= 0.0:
                    z = w0 * d0 + w1 * d1 + w2 * d2
                    if z < zbuf[vi, ui]:
                        zbuf[vi, ui] = z
    for vi in range(height):
        for ui in range(width):
            if zbuf[vi, ui] == np.inf:
                zbuf[vi, ui] = 0.0
    return zbuf_arr


def im2col(floating[:, :, :, ::1] x, int ksize, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = (h + 2 * pad - ksize) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - ksize) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((n, c * ksize * ksize, ho * wo), dtype=dtype)
    cdef floating[:, :, ::1] out = out_arr
    cdef Py_ssize_t ni, ci, ki, kj, i, j, row, hi_, wi_
    for ni in range(n):
        for ci in range(c):
            for ki in range(ksize):
                for kj in range(ksize):
                    row = (ci * ksize + ki) * ksize + kj
                    for i in range(ho):
                        hi_ = i * stride + ki - pad
                        if hi_ < 0 or hi_ >= h:
                            continue
                        for j in range(wo):
                            wi_ = j * stride + kj - pad
                            if wi_ < 0 or wi_ >= w:
                                continue
                            out[ni, row, i * wo + j] = x[ni, ci, hi_, wi_]
    return out_arr


def col2im(floating[:, :, ::1] cols, int n, int c, int h, int w, int ksize, int stride, int pad):
    cdef Py_ssize_t ho = (h + 2 * pad - ksize) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - ksize) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ki, kj, ni, ci, i, j, row, hi_, wi_
    for ki in range(ksize):
        for kj in range(ksize):
            for ni in range(n):
                for ci in range(c):
                    row = (ci * ksize + ki) * ksize + kj
                    for i in range(ho):
                        hi_ = i * stride + ki - pad
                        if hi_ < 0 or hi_ >= h:
                            continue
                        for j in range(wo):
                            wi_ = j * stride + kj - pad
                            if wi_ < 0 or wi_ >= w:
                                continue
                            out[ni, ci, hi_, wi_] += cols[ni, row, i * wo + j]
    return out_arr


def nearest_anchor_indices(long long[:, ::1] anchor_uv, int height, int width):
    cdef Py_ssize_t a, na = anchor_uv.shape[0]
    cdef int u, v
    cdef long long d2, best_d2, du, dv
    cdef int best
    out_arr = np.empty((height, width), dtype=np.int32)
    cdef int[:, ::1] out = out_arr
    for v in range(height):
        for u in range(width):
            best = 0
            dv = anchor_uv[0, 1] - v
            du = anchor_uv[0, 0] - u
            best_d2 = dv * dv + du * du
            for a in range(1, na):
                dv = anchor_uv[a, 1] - v
                du = anchor_uv[a, 0] - u
                d2 = dv * dv + du * du
                if d2 < best_d2:
                    best_d2 = d2
                    best = <int>a
            out[v, u] = best
    return out_arr


def nearest_true_pixel(cnp.uint8_t[:, ::1] mask, int u, int v):
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    cdef Py_ssize_t i, j
    cdef long long d2, best_d2 = -1
    cdef long long du, dv
    cdef int bu = -1, bv = -1
    for i in range(h):
        for j in range(w):
            if mask[i, j]:
                dv = i - v
                du = j - u
                d2 = dv * dv + du * du
                if best_d2 < 0 or d2 < best_d2:
                    best_d2 = d2
                    bu = <int>j
                    bv = <int>i
    return bu, bv
