"""Cloth meshes: grid particles, spring topology, shape masks."""

from dataclasses import dataclass, field

import numpy as np

SHAPES = ("square", "rectangle", "tshirt")

SPRING_STRUCTURAL = 0
SPRING_SHEAR = 1
SPRING_BENDING = 2
SPRING_KIND_NAMES = ("structural", "shear", "bending")

# T-shirt outline in cloth-local coordinates, units of `size`, centered at the
# origin, +y toward the collar. Torso rectangle plus two sleeve trapezoids,
# straight hem across the shoulders/sleeve tops.
TSHIRT_POLYGON = np.array(
    [
        (-0.25, -0.50),
        (0.25, -0.50),
        (0.25, 0.20),
        (0.50, 0.30),
        (0.50, 0.50),
        (-0.50, 0.50),
        (-0.50, 0.30),
        (-0.25, 0.20),
    ]
)


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class ClothMesh:
    """Immutable particle/spring description of one cloth.

    Particles are the active grid nodes, indexed row-major over active nodes.
    ``node_index[r, c]`` maps grid position to particle index (-1 = inactive).
    """

    shape_id: str
    rows: int
    cols: int
    spacing: float
    active: np.ndarray  # (rows, cols) bool
    node_index: np.ndarray  # (rows, cols) int32, -1 where inactive
    rest_xy: np.ndarray  # (N, 2) float64 flat rest positions
    spring_a: np.ndarray  # (S,) int32
    spring_b: np.ndarray  # (S,) int32
    spring_rest: np.ndarray  # (S,) float64
    spring_kind: np.ndarray  # (S,) uint8
    grid_rc: np.ndarray = field(default=None)  # (N, 2) int32 grid coords per particle
    triangles: np.ndarray = field(default=None)  # (T, 3) int32 render triangles

    def __post_init__(self):
        for name in (
            "active",
            "node_index",
            "rest_xy",
            "spring_a",
            "spring_b",
            "spring_rest",
            "spring_kind",
            "grid_rc",
            "triangles",
        ):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n_particles(self):
        return self.rest_xy.shape[0]

    @property
    def n_springs(self):
        return self.spring_a.shape[0]

    def corner_particles(self):
        """Particle indices of the 4 grid corners (square/rectangle only).

        Order: (0,0), (0,cols-1), (rows-1,0), (rows-1,cols-1).
        """
        if self.shape_id == "tshirt":
            raise MeshError("true corners are undefined for the tshirt shape")
        corners = [(0, 0), (0, self.cols - 1), (self.rows - 1, 0), (self.rows - 1, self.cols - 1)]
        return np.array([self.node_index[r, c] for r, c in corners], dtype=np.int32)


def points_in_polygon(points, polygon):
    """Even-odd-rule point-in-polygon test. points (P,2), polygon (V,2)."""
    points = np.asarray(points, dtype=np.float64)
    px, py = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    v = np.asarray(polygon, dtype=np.float64)
    n = len(v)
    for i in range(n):
        x0, y0 = v[i]
        x1, y1 = v[(i + 1) % n]
        crosses = (y0 > py) != (y1 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (px < np.where(crosses, xint, 0.0))
    return inside


def build_mesh(shape_id, size, grid_dims):
    """Create a flat cloth mesh centered at the origin.

    ``size`` is the longer side in meters; node spacing is uniform,
    size / (max(grid_dims) - 1). The tshirt shape keeps only grid nodes
    inside TSHIRT_POLYGON scaled to ``size``.
    """
    if shape_id not in SHAPES:
        raise MeshError(f"unknown shape {shape_id!r}, expected one of {SHAPES}")
    rows, cols = int(grid_dims[0]), int(grid_dims[1])
    if rows < 2 or cols < 2:
        raise MeshError(f"grid_dims must be at least 2x2, got {rows}x{cols}")
    if size <= 0:
        raise MeshError(f"size must be positive, got {size}")

    spacing = size / (max(rows, cols) - 1)
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    x = (cc - (cols - 1) / 2.0) * spacing
    y = ((rows - 1) / 2.0 - rr) * spacing

    if shape_id == "tshirt":
        pts = np.stack([x.ravel() / size, y.ravel() / size], axis=1)
        active = points_in_polygon(pts, TSHIRT_POLYGON).reshape(rows, cols)
        if not active.any():
            raise MeshError("tshirt polygon produced no active particles")
    else:
        active = np.ones((rows, cols), dtype=bool)

    node_index = np.full((rows, cols), -1, dtype=np.int32)
    node_index[active] = np.arange(active.sum(), dtype=np.int32)
    rest_xy = np.stack([x[active], y[active]], axis=1)
    grid_rc = np.stack(np.nonzero(active), axis=1).astype(np.int32)

    def both_active(r0, c0, r1, c1):
        return active[r0, c0] & active[r1, c1]

    sa, sb, srest, skind = [], [], [], []

    def add_springs(dr, dc, kind, rest):
        r0, c0 = np.meshgrid(
            np.arange(0, rows - dr),
            np.arange(max(0, -dc), cols - max(0, dc)),
            indexing="ij",
        )
        r1, c1 = r0 + dr, c0 + dc
        ok = both_active(r0, c0, r1, c1)
        sa.append(node_index[r0[ok], c0[ok]])
        sb.append(node_index[r1[ok], c1[ok]])
        srest.append(np.full(ok.sum(), rest))
        skind.append(np.full(ok.sum(), kind, dtype=np.uint8))

    add_springs(0, 1, SPRING_STRUCTURAL, spacing)
    add_springs(1, 0, SPRING_STRUCTURAL, spacing)
    add_springs(1, 1, SPRING_SHEAR, spacing * np.sqrt(2.0))
    add_springs(1, -1, SPRING_SHEAR, spacing * np.sqrt(2.0))
    add_springs(0, 2, SPRING_BENDING, 2.0 * spacing)
    add_springs(2, 0, SPRING_BENDING, 2.0 * spacing)

    spring_a = np.concatenate(sa).astype(np.int32)
    spring_b = np.concatenate(sb).astype(np.int32)

    # two render triangles per fully active quad
    tris = []
    q00 = node_index[:-1, :-1]
    q01 = node_index[:-1, 1:]
    q10 = node_index[1:, :-1]
    q11 = node_index[1:, 1:]
    quad_ok = (q00 >= 0) & (q01 >= 0) & (q10 >= 0) & (q11 >= 0)
    tris.append(np.stack([q00[quad_ok], q01[quad_ok], q10[quad_ok]], axis=1))
    tris.append(np.stack([q01[quad_ok], q11[quad_ok], q10[quad_ok]], axis=1))
    triangles = np.concatenate(tris).astype(np.int32)

    return ClothMesh(
        shape_id=shape_id,
        rows=rows,
        cols=cols,
        spacing=spacing,
        active=active,
        node_index=node_index,
        rest_xy=rest_xy,
        spring_a=spring_a,
        spring_b=spring_b,
        spring_rest=np.concatenate(srest),
        spring_kind=np.concatenate(skind),
        grid_rc=grid_rc,
        triangles=triangles,
    )
