"""Mass-spring cloth dynamics with picker-based bimanual pick-and-place.

Integration is semi-implicit Euler over spring forces, gravity, viscous
damping and table contact. Bound (grasped) particles are kinematic: their
position is set by the picker each substep. Everything is float64 and
single-threaded, so runs are bit-reproducible.
"""

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .camera import back_project_pixel, pixel_in_frame, project_points
from .mesh import SPRING_KIND_NAMES, build_mesh


class SimulationDivergedError(RuntimeError):
    pass


class BindError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters. All tunables live here, not in code.

    Stiffness defaults keep in-plane stretch low while staying inside the
    explicit-integrator stability bound at dt/substeps; bending is soft so
    creases do not push folds back open. friction is the tangential velocity
    retention on table contact; below friction_stick_speed the tangential
    velocity is zeroed entirely (static friction), which is what lets folds
    hold after release.
    """

    dt: float = 0.01
    substeps: int = 12
    gravity: float = -9.8
    damping: float = 0.5
    friction: float = 0.2
    friction_stick_speed: float = 0.02
    stiffness_structural: float = 12.0
    stiffness_shear: float = 6.0
    stiffness_bending: float = 0.05
    total_mass: float = 0.05
    particle_radius: float = 0.002
    bind_radius: float = None  # meters; None -> 1.5 x mesh spacing
    lift_height: float = 0.075
    release_height: float = 0.01
    picker_speed: float = 0.25
    settle_speed_eps: float = 0.0025
    settle_max_steps: int = 600

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.lift_height <= 0:
            raise ValueError("lift_height must be positive")

    def spring_stiffness(self, mesh):
        table = np.array(
            [self.stiffness_structural, self.stiffness_shear, self.stiffness_bending]
        )
        return table[mesh.spring_kind]

    def resolved_bind_radius(self, mesh):
        return self.bind_radius if self.bind_radius is not None else 1.5 * mesh.spacing


@dataclass
class ClothState:
    """Particle positions/velocities plus grasp bindings."""

    mesh: object
    positions: np.ndarray  # (N,3) float64
    velocities: np.ndarray  # (N,3) float64
    bound: dict = field(default_factory=dict)  # picker_id -> particle index

    def copy(self):
        return ClothState(
            mesh=self.mesh,
            positions=self.positions.copy(),
            velocities=self.velocities.copy(),
            bound=dict(self.bound),
        )


@dataclass(frozen=True)
class SettleResult:
    state: ClothState
    steps: int
    converged: bool


@dataclass(frozen=True)
class PickPlaceResult:
    state: ClothState
    bound_ok: tuple  # one bool per attempted arm
    settle: SettleResult


def make_flat_state(shape_id="square", size=0.30, grid_dims=(32, 32), mesh=None):
    """Flat resting cloth on the table (z = 0)."""
    if mesh is None:
        mesh = build_mesh(shape_id, size, grid_dims)
    n = mesh.n_particles
    positions = np.zeros((n, 3))
    positions[:, :2] = mesh.rest_xy
    return ClothState(mesh=mesh, positions=positions, velocities=np.zeros((n, 3)))


def spring_forces(positions, mesh, config):
    """Net spring force per particle (N,3)."""
    out = np.zeros_like(positions)
    _kernels.accumulate_spring_forces(
        np.ascontiguousarray(positions),
        mesh.spring_a,
        mesh.spring_b,
        mesh.spring_rest,
        config.spring_stiffness(mesh),
        out,
    )
    return out


def _find_bad_spring(positions, mesh, config):
    d = positions[mesh.spring_b] - positions[mesh.spring_a]
    length = np.linalg.norm(d, axis=1)
    f = config.spring_stiffness(mesh) * (length - mesh.spring_rest)
    bad = ~np.isfinite(f) | ~np.isfinite(length)
    if bad.any():
        s = int(np.argmax(bad))
        return (
            f"spring {s} ({SPRING_KIND_NAMES[mesh.spring_kind[s]]}, particles "
            f"{mesh.spring_a[s]}-{mesh.spring_b[s]})"
        )
    return "unknown spring"


def _substeps(state, config, picker_path=None):
    """Advance one dt in ``substeps`` increments, mutating state in place.

    picker_path: optional dict picker_id -> (pos_fn, vel_fn) giving the
    picker pose at a substep fraction in [0, 1].
    """
    x, v = state.positions, state.velocities
    mesh = state.mesh
    h = config.dt / config.substeps
    mass = config.total_mass / mesh.n_particles
    bound_items = sorted(state.bound.items())
    pin0 = {pid: x[idx].copy() for pid, idx in bound_items}
    for s in range(config.substeps):
        f = spring_forces(x, mesh, config)
        if not np.isfinite(f).all():
            raise SimulationDivergedError(
                "non-finite spring force from " + _find_bad_spring(x, mesh, config)
            )
        v += (h / mass) * f
        v[:, 2] += h * config.gravity
        v *= max(0.0, 1.0 - config.damping * h)
        x += h * v
        # table contact: project, kill downward velocity, apply friction
        below = x[:, 2] < 0.0
        if below.any():
            x[below, 2] = 0.0
            vz = v[below, 2]
            v[below, 2] = np.where(vz < 0.0, 0.0, vz)
            vt = v[below, :2]
            speed = np.linalg.norm(vt, axis=1)
            sly = np.where(speed < config.friction_stick_speed, 0.0, config.friction)
            v[below, :2] = vt * sly[:, None]
        if bound_items:
            frac = (s + 1) / config.substeps
            for picker_id, particle in bound_items:
                if picker_path and picker_id in picker_path:
                    pos_fn, vel_fn = picker_path[picker_id]
                    x[particle] = pos_fn(frac)
                    v[particle] = vel_fn(frac)
                else:
                    # stationary picker: hold position, zero velocity
                    v[particle] = 0.0
                    x[particle] = pin0[picker_id]
    return state


def step(state, config):
    """One dt of dynamics. Bound particles stay pinned to their picker."""
    out = state.copy()
    # pin targets are the positions at entry
    pinned = {pid: out.positions[idx].copy() for pid, idx in out.bound.items()}
    picker_path = {
        pid: (lambda frac, p=pos: p, lambda frac: np.zeros(3)) for pid, pos in pinned.items()
    }
    return _substeps(out, config, picker_path)


def max_speed(state):
    return float(np.linalg.norm(state.velocities, axis=1).max()) if len(state.velocities) else 0.0


def settle(state, config):
    """Step until the fastest particle drops below settle_speed_eps."""
    out = state.copy()
    if max_speed(out) < config.settle_speed_eps and out.positions[:, 2].min() >= -1e-6:
        return SettleResult(state=out, steps=0, converged=True)
    for i in range(config.settle_max_steps):
        out = _substeps(out, config)
        if max_speed(out) < config.settle_speed_eps:
            return SettleResult(state=out, steps=i + 1, converged=True)
    return SettleResult(state=out, steps=config.settle_max_steps, converged=False)


def bind_nearest(state, point, config):
    """Particle index nearest ``point`` within the bind radius, else None."""
    d = np.linalg.norm(state.positions - point, axis=1)
    k = int(np.argmin(d))
    if d[k] <= config.resolved_bind_radius(state.mesh):
        return k
    return None


def _linear_phase(start, end, speed, dt):
    """Steps and per-step interpolation for a straight-line picker move."""
    dist = float(np.linalg.norm(end - start))
    steps = max(1, int(np.ceil(dist / (speed * dt))))
    return dist, steps


def execute_pick_place(state, action, camera, config, depth_image=None):
    """Run a (possibly bimanual) pick-and-place and settle.

    Pick pixels are back-projected through the current depth image to 3D
    grasp points; each arm binds the nearest particle within the bind
    radius (failure flags the arm and it becomes a no-op). Both arms move
    through synchronized equal-duration phases: vertical lift to
    lift_height, horizontal translate to the place target, lower to
    release_height, release, settle.
    """
    from .render import render_depth  # local import to avoid module cycle

    out = state.copy()
    out.bound = {}
    if depth_image is None:
        depth_image = render_depth(out, camera)

    arms = [(action.p1, action.q1)]
    if action.arm_mode == "dual":
        arms.append((action.p2, action.q2))

    grasp, target, bound_ok = [], [], []
    for p, q in arms:
        pu, pv = float(p[0]), float(p[1])
        ok = pixel_in_frame(pu, pv, camera)
        d = depth_image.values[int(round(pv)), int(round(pu))] if ok else 0.0
        if d <= 0.0:
            bound_ok.append(False)
            continue
        gp = back_project_pixel(pu, pv, float(d), camera)
        k = bind_nearest(out, gp, config)
        if k is None:
            bound_ok.append(False)
            continue
        # place target: ray through the place pixel intersected with the table
        qt = back_project_pixel(float(q[0]), float(q[1]), camera.height, camera)
        picker_id = len(grasp)
        out.bound[picker_id] = k
        grasp.append(out.positions[k].copy())
        target.append(qt)
        bound_ok.append(True)

    if not grasp:
        res = settle(out, config)
        return PickPlaceResult(state=res.state, bound_ok=tuple(bound_ok), settle=res)

    grasp = np.array(grasp)
    target = np.array(target)
    lift = grasp.copy()
    lift[:, 2] = config.lift_height
    over = target.copy()
    over[:, 2] = config.lift_height
    low = target.copy()
    low[:, 2] = config.release_height

    for a, b in ((grasp, lift), (lift, over), (over, low)):
        dists = [_linear_phase(a[i], b[i], config.picker_speed, config.dt)[0] for i in range(len(a))]
        steps = max(1, int(np.ceil(max(dists) / (config.picker_speed * config.dt))))
        for n in range(steps):
            t0 = n / steps
            t1 = (n + 1) / steps
            picker_path = {}
            for i in range(len(a)):
                seg = b[i] - a[i]
                vel = seg / (steps * config.dt)

                def pos_fn(frac, a_i=a[i], seg_i=seg, t0_=t0, t1_=t1):
                    return a_i + (t0_ + (t1_ - t0_) * frac) * seg_i

                picker_path[i] = (pos_fn, lambda frac, v_=vel: v_)
            out = _substeps(out, config, picker_path)
        for i in range(len(a)):
            out.positions[out.bound[i]] = b[i]

    # release
    for i in list(out.bound):
        out.velocities[out.bound[i]] = 0.0
    out.bound = {}
    res = settle(out, config)
    return PickPlaceResult(state=res.state, bound_ok=tuple(bound_ok), settle=res)


def perturb_crumple(state, max_translation_px, camera, config, rng):
    """One random pick-and-place of at most max_translation_px, then settle."""
    from .policy import PickPlaceAction
    from .render import cloth_mask, render_depth

    if max_translation_px < 0:
        raise ValueError("max_translation_px must be >= 0")
    depth = render_depth(state, camera)
    mask = cloth_mask(depth)
    vs, us = np.nonzero(mask)
    if len(us) == 0:
        return state.copy()
    k = int(rng.integers(len(us)))
    p = np.array([float(us[k]), float(vs[k])])
    theta = float(rng.uniform(0.0, 2.0 * np.pi))
    dist = float(rng.uniform(0.0, max_translation_px))
    q = p + dist * np.array([np.cos(theta), np.sin(theta)])
    h, w = camera.image_hw
    q = np.clip(q, 0.0, [w - 1.0, h - 1.0])
    action = PickPlaceAction(p1=p, p2=p.copy(), q1=q, q2=q.copy(), arm_mode="single")
    return execute_pick_place(state, action, camera, config, depth_image=depth).state


_SNAPSHOT_MAGIC = b"FFCS"
_SHAPE_CODES = {"square": 0, "rectangle": 1, "tshirt": 2}
_SHAPE_NAMES = {v: k for k, v in _SHAPE_CODES.items()}


def save_state(state, path):
    """Snapshot: header (N, shape, grid dims) + little-endian float32 arrays."""
    mesh = state.mesh
    with open(path, "wb") as f:
        f.write(_SNAPSHOT_MAGIC)
        f.write(
            struct.pack(
                "<iBii", mesh.n_particles, _SHAPE_CODES[mesh.shape_id], mesh.rows, mesh.cols
            )
        )
        f.write(state.positions.astype("<f4").tobytes())
        f.write(state.velocities.astype("<f4").tobytes())


def load_state(path, size=0.30):
    """Rebuild a ClothState from a snapshot (mesh rebuilt from header + size)."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _SNAPSHOT_MAGIC:
            raise ValueError(f"not a cloth snapshot: bad magic {magic!r}")
        n, shape_code, rows, cols = struct.unpack("<iBii", f.read(13))
        mesh = build_mesh(_SHAPE_NAMES[shape_code], size, (rows, cols))
        if mesh.n_particles != n:
            raise ValueError(f"snapshot particle count {n} != mesh {mesh.n_particles}")
        pos = np.frombuffer(f.read(n * 12), dtype="<f4").reshape(n, 3).astype(np.float64)
        vel = np.frombuffer(f.read(n * 12), dtype="<f4").reshape(n, 3).astype(np.float64)
    return ClothState(mesh=mesh, positions=pos, velocities=vel)
