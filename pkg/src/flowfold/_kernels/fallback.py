"""Pure numpy implementations of the hot kernels.

These are the reference implementations; the Cython module in _native.pyx
mirrors them operation-for-operation (same accumulation order, no FMA) so
the two backends produce bit-identical output.
"""

import numpy as np

BACKEND_NAME = "numpy"


def accumulate_spring_forces(positions, idx_a, idx_b, rest, stiffness, out):
    """Add Hookean spring forces into ``out`` (N,3), in spring order.

    Force on particle a points toward b when the spring is stretched.
    Zero-length springs contribute nothing (degenerate, cannot normalize).
    """
    d = positions[idx_b] - positions[idx_a]
    length = np.sqrt(np.einsum("ij,ij->i", d, d))
    ok = length > 1e-12
    scale = np.zeros_like(length)
    scale[ok] = stiffness[ok] * (length[ok] - rest[ok]) / length[ok]
    f = scale[:, None] * d
    np.add.at(out, idx_a, f)
    np.add.at(out, idx_b, -f)
    return out


def rasterize_triangles(uv, depth, triangles, height, width):
    """Z-buffer rasterization of projected triangles.

    uv: (N,2) float64 continuous pixel coords (u=col, v=row), integer values
    are pixel centers. depth: (N,) camera depth per vertex. triangles: (T,3)
    int32 vertex indices. Returns (H,W) float64 depth, 0 where nothing drawn.
    """
    zbuf = np.full((height, width), np.inf)
    for t in range(triangles.shape[0]):
        i0, i1, i2 = triangles[t]
        u0, v0 = uv[i0]
        u1, v1 = uv[i1]
        u2, v2 = uv[i2]
        d0, d1, d2 = depth[i0], depth[i1], depth[i2]
        if d0 <= 0.0 or d1 <= 0.0 or d2 <= 0.0:
            continue
        area = (u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0)
        if area == 0.0:
            continue
        umin = max(int(np.ceil(min(u0, u1, u2))), 0)
        umax = min(int(np.floor(max(u0, u1, u2))), width - 1)
        vmin = max(int(np.ceil(min(v0, v1, v2))), 0)
        vmax = min(int(np.floor(max(v0, v1, v2))), height - 1)
        if umin > umax or vmin > vmax:
            continue
        us = np.arange(umin, umax + 1, dtype=np.float64)
        vs = np.arange(vmin, vmax + 1, dtype=np.float64)
        uu, vv = np.meshgrid(us, vs)
        w0 = ((u1 - uu) * (v2 - vv) - (u2 - uu) * (v1 - vv)) / area
        w1 = ((u2 - uu) * (v0 - vv) - (u0 - uu) * (v2 - vv)) / area
        w2 = ((u0 - uu) * (v1 - vv) - (u1 - uu) * (v0 - vv)) / area
        inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        if not inside.any():
            continue
        z = w0 * d0 + w1 * d1 + w2 * d2
        sub = zbuf[vmin : vmax + 1, umin : umax + 1]
        closer = inside & (z < sub)
        sub[closer] = z[closer]
    zbuf[~np.isfinite(zbuf)] = 0.0
    return zbuf


def im2col(x, ksize, stride, pad):
    """(N,C,H,W) -> (N, C*k*k, L) patch matrix, L = Ho*Wo."""
    n, c, h, w = x.shape
    ho = (h + 2 * pad - ksize) // stride + 1
    wo = (w + 2 * pad - ksize) // stride + 1
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    s0, s1, s2, s3 = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, ksize, ksize, ho, wo),
        strides=(s0, s1, s2, s3, s2 * stride, s3 * stride),
        writeable=False,
    )
    return np.ascontiguousarray(windows).reshape(n, c * ksize * ksize, ho * wo)


def col2im(cols, n, c, h, w, ksize, stride, pad):
    """Adjoint of im2col: scatter-add patches back to (N,C,H,W)."""
    ho = (h + 2 * pad - ksize) // stride + 1
    wo = (w + 2 * pad - ksize) // stride + 1
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    cols6 = cols.reshape(n, c, ksize, ksize, ho, wo)
    for ki in range(ksize):
        for kj in range(ksize):
            xp[:, :, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride] += cols6[
                :, :, ki, kj
            ]
    if pad > 0:
        return xp[:, :, pad : h + pad, pad : w + pad]
    return xp


def nearest_anchor_indices(anchor_uv, height, width):
    """Index of the nearest anchor per pixel, squared integer distances.

    anchor_uv: (A,2) int arrays of (u,v). Ties resolve to the lowest index,
    so callers control tie order by sorting anchors (row-major) beforehand.
    """
    au = anchor_uv[:, 0].astype(np.int64)
    av = anchor_uv[:, 1].astype(np.int64)
    out = np.empty((height, width), dtype=np.int32)
    us = np.arange(width, dtype=np.int64)
    for v in range(height):
        d2 = (av[:, None] - v) ** 2 + (au[:, None] - us[None, :]) ** 2
        out[v] = np.argmin(d2, axis=0)
    return out


def nearest_true_pixel(mask, u, v):
    """Nearest mask==True pixel to (u,v), ties broken row-major.

    Returns (u, v) of the winner. Caller guarantees mask is nonempty.
    """
    vs, us = np.nonzero(mask)
    d2 = (us.astype(np.int64) - int(u)) ** 2 + (vs.astype(np.int64) - int(v)) ** 2
    k = int(np.argmin(d2))
    return int(us[k]), int(vs[k])
