"""Top-down depth rendering of the cloth and mask utilities.

The cloth grid is triangulated (two triangles per fully active quad) and
rasterized with a z-buffer; background pixels are exactly 0 in the masked
depth image.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .camera import back_project_pixel, project_points


class BackgroundPixelError(ValueError):
    pass


@dataclass
class DepthImage:
    values: np.ndarray  # (H,W) float32 camera-axis depth in meters, 0 = background
    masked: bool = True

    @property
    def shape(self):
        return self.values.shape


VISIBILITY_DEPTH_TOL = 0.005  # m; particle counts as topmost within this


def render_depth(state, camera):
    """Masked depth image of the cloth (z-buffer triangle rasterization)."""
    h, w = camera.image_hw
    uv, depth = project_points(state.positions, camera)
    tris = state.mesh.triangles
    if tris.shape[0] == 0 or state.mesh.n_particles == 0:
        return DepthImage(values=np.zeros((h, w), dtype=np.float32), masked=True)
    # vertices behind the camera poison their triangles inside the kernel
    uv = np.nan_to_num(uv, nan=0.0, posinf=0.0, neginf=0.0)
    zbuf = _kernels.rasterize_triangles(uv, depth, tris, h, w)
    return DepthImage(values=zbuf.astype(np.float32), masked=True)


def project_particles(state, camera, depth_image=None):
    """Continuous pixel coordinates and a topmost-visibility flag per particle."""
    if depth_image is None:
        depth_image = render_depth(state, camera)
    h, w = camera.image_hw
    uv, depth = project_points(state.positions, camera)
    ui = np.round(uv[:, 0]).astype(np.int64)
    vi = np.round(uv[:, 1]).astype(np.int64)
    in_frame = (
        np.isfinite(uv).all(axis=1) & (ui >= 0) & (ui < w) & (vi >= 0) & (vi < h) & (depth > 0)
    )
    visible = np.zeros(len(uv), dtype=bool)
    idx = np.nonzero(in_frame)[0]
    zb = depth_image.values[vi[idx], ui[idx]].astype(np.float64)
    visible[idx] = (zb > 0) & (depth[idx] <= zb + VISIBILITY_DEPTH_TOL)
    return uv, visible


def back_project(pixel, depth_image, camera):
    """Pixel on the cloth mask -> 3D world point at its stored depth."""
    u, v = float(pixel[0]), float(pixel[1])
    d = float(depth_image.values[int(round(v)), int(round(u))])
    if d <= 0.0:
        raise BackgroundPixelError(f"pixel ({u}, {v}) is background (depth 0)")
    return back_project_pixel(u, v, d, camera)


def cloth_mask(depth_image):
    """Boolean cloth mask (depth > 0)."""
    return depth_image.values > 0


def save_depth_raw(depth_image, path):
    """Raw little-endian float32 row-major + JSON sidecar."""
    arr = np.ascontiguousarray(depth_image.values, dtype="<f4")
    with open(path, "wb") as f:
        f.write(arr.tobytes())
    h, w = depth_image.values.shape
    sidecar = {"width": w, "height": h, "units": "m", "masked": bool(depth_image.masked)}
    with open(str(path) + ".json", "w") as f:
        json.dump(sidecar, f)


def load_depth_raw(path):
    with open(str(path) + ".json") as f:
        sidecar = json.load(f)
    h, w = sidecar["height"], sidecar["width"]
    with open(path, "rb") as f:
        arr = np.frombuffer(f.read(), dtype="<f4").reshape(h, w)
    return DepthImage(values=arr.copy(), masked=sidecar.get("masked", True))


def save_depth_pgm(depth_image, path):
    """Debug export: 16-bit PGM, depth scaled to [0, 65535]."""
    vals = depth_image.values.astype(np.float64)
    top = float(vals.max())
    scaled = np.zeros_like(vals) if top <= 0 else vals / top * 65535.0
    arr = scaled.astype(">u2")  # PGM binary is big-endian
    h, w = vals.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode())
        f.write(arr.tobytes())
