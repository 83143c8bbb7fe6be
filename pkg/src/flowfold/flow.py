"""Ground-truth flow from particle correspondences, dense fields, metrics.

A flow field maps pixel (u, v) in the observation to (u + du, v + dv) in
the goal. Channel 0 is du (column offset), channel 1 dv (row offset).
"""

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .camera import project_points
from .render import render_depth


class FlowError(ValueError):
    pass


@dataclass
class FlowField:
    data: np.ndarray  # (2, H, W) float32

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[0] != 2:
            raise FlowError(f"flow field must be (2,H,W), got {self.data.shape}")
        self.data = np.asarray(self.data, dtype=np.float32)

    @property
    def du(self):
        return self.data[0]

    @property
    def dv(self):
        return self.data[1]

    @property
    def shape(self):
        return self.data.shape[1:]

    @classmethod
    def zeros(cls, hw=(200, 200)):
        return cls(np.zeros((2, *hw), dtype=np.float32))


@dataclass
class SparseFlow:
    """Per-particle anchors: integer pixels in the observation + flow vectors."""

    pixels: np.ndarray  # (A,2) int32 (u,v)
    vectors: np.ndarray  # (A,2) float64 (du,dv)
    particle_index: np.ndarray  # (A,) int32
    image_hw: tuple = (200, 200)

    @property
    def n_anchors(self):
        return self.pixels.shape[0]

    def mask(self):
        m = np.zeros(self.image_hw, dtype=bool)
        m[self.pixels[:, 1], self.pixels[:, 0]] = True
        return m


def ground_truth_flow(state_obs, state_goal, camera):
    """Sparse flow between two states of the same cloth.

    Every particle contributes an anchor at its rounded observation pixel;
    anchors falling outside the frame are dropped; rounded-pixel collisions
    keep the particle that is topmost (closest to camera) in the observation,
    lowest particle index on equal depth.
    """
    if state_obs.mesh is not state_goal.mesh and (
        state_obs.mesh.shape_id != state_goal.mesh.shape_id
        or state_obs.mesh.rows != state_goal.mesh.rows
        or state_obs.mesh.cols != state_goal.mesh.cols
    ):
        raise FlowError("observation and goal states use different meshes")
    h, w = camera.image_hw
    uv_obs, depth_obs = project_points(state_obs.positions, camera)
    uv_goal, _ = project_points(state_goal.positions, camera)
    ui = np.round(uv_obs[:, 0]).astype(np.int64)
    vi = np.round(uv_obs[:, 1]).astype(np.int64)
    ok = (
        np.isfinite(uv_obs).all(axis=1)
        & np.isfinite(uv_goal).all(axis=1)
        & (ui >= 0)
        & (ui < w)
        & (vi >= 0)
        & (vi < h)
    )
    order = np.nonzero(ok)[0]
    # stable sort by depth keeps the lowest particle index among equals;
    # first occurrence per pixel wins below
    order = order[np.argsort(depth_obs[order], kind="stable")]
    flat = vi[order] * w + ui[order]
    _, first = np.unique(flat, return_index=True)
    keep = order[np.sort(first)]
    vectors = uv_goal[keep] - uv_obs[keep]
    return SparseFlow(
        pixels=np.stack([ui[keep], vi[keep]], axis=1).astype(np.int32),
        vectors=vectors.astype(np.float64),
        particle_index=keep.astype(np.int32),
        image_hw=(h, w),
    )


def masked_epe(predicted, truth):
    """Mean endpoint error (px) of a dense field against sparse truth."""
    if truth.n_anchors == 0:
        raise FlowError("empty supervision mask")
    if predicted.shape != truth.image_hw:
        raise FlowError(f"flow shape {predicted.shape} != truth {truth.image_hw}")
    u = truth.pixels[:, 0]
    v = truth.pixels[:, 1]
    pred = np.stack([predicted.du[v, u], predicted.dv[v, u]], axis=1).astype(np.float64)
    return float(np.linalg.norm(pred - truth.vectors, axis=1).mean())


def query_flow(flow, pixel):
    """Nearest-integer-pixel lookup (no interpolation)."""
    h, w = flow.shape
    u = int(round(float(pixel[0])))
    v = int(round(float(pixel[1])))
    if not (0 <= u < w and 0 <= v < h):
        raise FlowError(f"pixel ({u}, {v}) out of bounds for {w}x{h} flow")
    return float(flow.du[v, u]), float(flow.dv[v, u])


def densify(sparse):
    """Dense field where each pixel takes its nearest anchor's vector.

    Ties go to the anchor earliest in row-major pixel order.
    """
    if sparse.n_anchors == 0:
        raise FlowError("cannot densify an empty sparse flow")
    h, w = sparse.image_hw
    order = np.lexsort((sparse.pixels[:, 0], sparse.pixels[:, 1]))
    pix = sparse.pixels[order]
    vec = sparse.vectors[order]
    idx = _kernels.nearest_anchor_indices(pix, h, w)
    data = np.empty((2, h, w), dtype=np.float32)
    data[0] = vec[idx, 0]
    data[1] = vec[idx, 1]
    return FlowField(data)


def mean_flow_magnitude(flow, mask):
    """Mean flow vector norm over mask pixels."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise FlowError("empty mask")
    mag = np.sqrt(flow.du.astype(np.float64) ** 2 + flow.dv.astype(np.float64) ** 2)
    return float(mag[mask].mean())


def flow_for_states(state_obs, state_goal, camera):
    """Densified oracle flow between two simulator states."""
    return densify(ground_truth_flow(state_obs, state_goal, camera))


# --- persistence -----------------------------------------------------------

def save_flow(flow, path):
    arr = np.ascontiguousarray(flow.data.transpose(1, 2, 0), dtype="<f4")
    with open(path, "wb") as f:
        f.write(arr.tobytes())
    h, w = flow.shape
    with open(str(path) + ".json", "w") as f:
        json.dump({"width": w, "height": h, "channels": 2, "units": "px"}, f)


def load_flow(path):
    with open(str(path) + ".json") as f:
        sidecar = json.load(f)
    h, w = sidecar["height"], sidecar["width"]
    raw = np.frombuffer(open(path, "rb").read(), dtype="<f4").reshape(h, w, 2)
    return FlowField(np.ascontiguousarray(raw.transpose(2, 0, 1)))


def save_sparse_flow(sparse, path):
    with open(path, "w") as f:
        for i in range(sparse.n_anchors):
            rec = {
                "u": int(sparse.pixels[i, 0]),
                "v": int(sparse.pixels[i, 1]),
                "du": float(sparse.vectors[i, 0]),
                "dv": float(sparse.vectors[i, 1]),
                "particle": int(sparse.particle_index[i]),
            }
            f.write(json.dumps(rec) + "\n")


def load_sparse_flow(path, image_hw=(200, 200)):
    pix, vec, part = [], [], []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            pix.append((rec["u"], rec["v"]))
            vec.append((rec["du"], rec["dv"]))
            part.append(rec["particle"])
    return SparseFlow(
        pixels=np.array(pix, dtype=np.int32).reshape(-1, 2),
        vectors=np.array(vec, dtype=np.float64).reshape(-1, 2),
        particle_index=np.array(part, dtype=np.int32),
        image_hw=image_hw,
    )


# --- visualization ---------------------------------------------------------

ARROW_STRIDE = 10


def flow_rgb(flow, max_magnitude=None):
    """Angle-hue / magnitude-saturation color wheel; zero flow is white."""
    du = flow.du.astype(np.float64)
    dv = flow.dv.astype(np.float64)
    mag = np.sqrt(du**2 + dv**2)
    if max_magnitude is None:
        max_magnitude = float(mag.max())
    sat = np.clip(mag / max_magnitude, 0.0, 1.0) if max_magnitude > 0 else np.zeros_like(mag)
    hue = (np.arctan2(dv, du) / (2.0 * np.pi)) % 1.0
    # HSV -> RGB with V=1
    i = np.floor(hue * 6.0).astype(int) % 6
    f = hue * 6.0 - np.floor(hue * 6.0)
    p = 1.0 - sat
    q = 1.0 - sat * f
    t = 1.0 - sat * (1.0 - f)
    ones = np.ones_like(hue)
    lut = [
        (ones, t, p),
        (q, ones, p),
        (p, ones, t),
        (p, q, ones),
        (t, p, ones),
        (ones, p, q),
    ]
    rgb = np.zeros((*hue.shape, 3))
    for k, (r, g, b) in enumerate(lut):
        sel = i == k
        rgb[sel, 0] = r[sel]
        rgb[sel, 1] = g[sel]
        rgb[sel, 2] = b[sel]
    return (rgb * 255.0 + 0.5).astype(np.uint8)


def arrow_points(flow, mask=None, stride=ARROW_STRIDE):
    """Arrow (start, end) pixel pairs on a stride grid (mask-filtered)."""
    h, w = flow.shape
    starts, ends = [], []
    for v in range(stride // 2, h, stride):
        for u in range(stride // 2, w, stride):
            if mask is not None and not mask[v, u]:
                continue
            starts.append((u, v))
            ends.append((u + float(flow.du[v, u]), v + float(flow.dv[v, u])))
    return starts, ends


def visualize_flow(flow, mode, path, mask=None):
    """Write a PNG: 'rgb' color wheel or 'arrows' over a neutral canvas."""
    from PIL import Image, ImageDraw

    if mode == "rgb":
        img = Image.fromarray(flow_rgb(flow))
    elif mode == "arrows":
        h, w = flow.shape
        img = Image.new("RGB", (w, h), (240, 240, 240))
        draw = ImageDraw.Draw(img)
        starts, ends = arrow_points(flow, mask=mask)
        for (u0, v0), (u1, v1) in zip(starts, ends):
            draw.line([u0, v0, u1, v1], fill=(200, 30, 30), width=1)
            draw.ellipse([u0 - 1, v0 - 1, u0 + 1, v0 + 1], fill=(30, 30, 200))
    else:
        raise ValueError(f"unknown flow visualization mode {mode!r}")
    img.save(path, format="PNG")
    return path
