"""Top-down pinhole camera model and projection helpers.

World frame: x right, y forward, z up, table plane at z=0. The camera sits
at (0, 0, height) looking straight down. Continuous pixel coordinates are
(u=column, v=row) with integer values at pixel centers; the principal point
is (100, 100) so the world origin projects to pixel (100, 100) exactly.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Camera:
    height: float = 0.65
    focal_px: float = 300.0
    image_hw: tuple = (200, 200)

    @property
    def cx(self):
        return self.image_hw[1] / 2.0

    @property
    def cy(self):
        return self.image_hw[0] / 2.0


def project_points(points, camera):
    """World points (P,3) -> continuous pixels (P,2) and camera depth (P,).

    Depth is measured along the optical axis (height - z); points at or
    behind the camera get depth <= 0 and non-finite pixels.
    """
    points = np.asarray(points, dtype=np.float64)
    depth = camera.height - points[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = camera.cx + camera.focal_px * points[:, 0] / depth
        v = camera.cy - camera.focal_px * points[:, 1] / depth
    uv = np.stack([u, v], axis=1)
    uv[depth <= 0.0] = np.nan
    return uv, depth


def back_project_pixel(u, v, depth, camera):
    """Inverse pinhole mapping of one pixel at a given camera depth."""
    x = (u - camera.cx) * depth / camera.focal_px
    y = -(v - camera.cy) * depth / camera.focal_px
    return np.array([x, y, camera.height - depth])


def pixel_in_frame(u, v, camera):
    h, w = camera.image_hw
    return 0 <= u <= w - 1 and 0 <= v <= h - 1


def meters_per_pixel(camera, depth=None):
    """Ground-plane meters spanned by one pixel at the given depth."""
    if depth is None:
        depth = camera.height
    return depth / camera.focal_px
