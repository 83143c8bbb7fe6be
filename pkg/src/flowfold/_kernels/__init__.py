"""Kernel backend selection.

The compiled extension (built from _native.pyx) is preferred when importable;
the numpy fallback is always available. Override with FLOWFOLD_KERNELS=numpy
or FLOWFOLD_KERNELS=native (the latter raises if the extension is missing).

Both backends are bit-identical; tests/test_kernels.py enforces it.
"""

import os

import numpy as np

from . import fallback

_requested = os.environ.get("FLOWFOLD_KERNELS", "auto").lower()

if _requested not in ("auto", "native", "numpy"):
    raise RuntimeError(f"FLOWFOLD_KERNELS must be auto|native|numpy, got {_requested!r}")

if _requested == "numpy":
    _impl = fallback
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        if _requested == "native":
            raise RuntimeError("FLOWFOLD_KERNELS=native but the compiled extension is not built")
        _impl = fallback

BACKEND = _impl.BACKEND_NAME


def get_backend(name="active"):
    """Return a kernel module: 'active' (selected), 'numpy', or 'native'."""
    if name == "active":
        return _impl
    if name == "numpy":
        return fallback
    if name == "native":
        from . import _native

        return _native
    raise ValueError(f"unknown backend {name!r}")


def accumulate_spring_forces(positions, idx_a, idx_b, rest, stiffness, out):
    return _impl.accumulate_spring_forces(positions, idx_a, idx_b, rest, stiffness, out)


def rasterize_triangles(uv, depth, triangles, height, width):
    return _impl.rasterize_triangles(
        np.ascontiguousarray(uv, dtype=np.float64),
        np.ascontiguousarray(depth, dtype=np.float64),
        np.ascontiguousarray(triangles, dtype=np.int32),
        height,
        width,
    )


def im2col(x, ksize, stride, pad):
    return _impl.im2col(np.ascontiguousarray(x), ksize, stride, pad)


def col2im(cols, n, c, h, w, ksize, stride, pad):
    return _impl.col2im(np.ascontiguousarray(cols), n, c, h, w, ksize, stride, pad)


def nearest_anchor_indices(anchor_uv, height, width):
    return _impl.nearest_anchor_indices(
        np.ascontiguousarray(anchor_uv, dtype=np.int64), height, width
    )


def nearest_true_pixel(mask, u, v):
    return _impl.nearest_true_pixel(
        np.ascontiguousarray(mask, dtype=np.uint8), int(u), int(v)
    )
