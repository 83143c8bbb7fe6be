"""The folding policy: flow in, conditioned picks, flow-queried places.

Pipeline per action: estimate flow between observation and subgoal, predict
pick 1 from the flow heatmap, condition pick 2 on pick 1's Gaussian, project
picks onto the cloth mask, place each pick at its flow endpoint, collapse to
a single arm when pick or place points nearly coincide.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .flow import FlowField, flow_for_states, mean_flow_magnitude, query_flow
from .nn import no_grad
from .nn.ops import gaussian_image
from .render import cloth_mask, render_depth
from .simulator import execute_pick_place

HEATMAP_CELLS = 20
CELL_PX = 10  # 200 px image / 20 cells
CONDITION_SIGMA = 5.0  # px, Gaussian conditioning image for the second pick

VARIANTS = ("ffn", "noflowin", "noflowplace", "noflow", "nosplit")


class EmptyMaskError(RuntimeError):
    pass


@dataclass
class PickPlaceAction:
    """Bimanual pixel-space action. Coordinates are float (u, v) pairs;

    policy outputs land on integer cell centers, sampled data keeps exact
    offsets. A 'single' action executes only the (p1, q1) pair.
    """

    p1: np.ndarray
    p2: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    arm_mode: str = "dual"

    def __post_init__(self):
        for name in ("p1", "p2", "q1", "q2"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.arm_mode not in ("single", "dual"):
            raise ValueError(f"arm_mode must be single|dual, got {self.arm_mode!r}")

    def to_json(self):
        return {
            "p1": self.p1.tolist(),
            "p2": self.p2.tolist(),
            "q1": self.q1.tolist(),
            "q2": self.q2.tolist(),
            "arm_mode": self.arm_mode,
        }

    @classmethod
    def from_json(cls, d):
        return cls(p1=d["p1"], p2=d["p2"], q1=d["q1"], q2=d["q2"], arm_mode=d["arm_mode"])


@dataclass
class RefinementConfig:
    enabled: bool = False
    mean_flow_threshold_px: float = 3.0
    max_actions: int = 3

    def __post_init__(self):
        if self.max_actions < 1:
            raise ValueError("max_actions must be >= 1")


@dataclass
class PolicyConfig:
    alpha_px: float = 30.0
    variant: str = "ffn"
    refinement: RefinementConfig = field(default_factory=RefinementConfig)

    def __post_init__(self):
        if self.alpha_px <= 0:
            raise ValueError("alpha_px must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")


@dataclass
class PolicyModels:
    """Networks used by predict_action; fields are optional per variant."""

    flownet: object = None
    picknet1: object = None
    picknet2: object = None
    picknet_joint: object = None
    placenet1: object = None
    placenet2: object = None
    flow_override: object = None  # callable (obs, goal) -> FlowField (oracle mode)

    def flow(self, obs, goal):
        if self.flow_override is not None:
            return self.flow_override(obs, goal)
        stacked = np.stack([obs.values, goal.values])[None].astype(np.float32)
        with no_grad():
            out = self.flownet.forward(stacked)
        return FlowField(out.data[0])


def cell_to_pixel(row, col):
    """Heatmap cell -> pixel at the cell center."""
    return np.array([CELL_PX * col + CELL_PX // 2, CELL_PX * row + CELL_PX // 2], dtype=np.float64)


def heatmap_argmax(heatmap):
    """(20,20) -> (row, col) of the max, ties broken row-major."""
    flat = int(np.argmax(heatmap))
    return flat // heatmap.shape[1], flat % heatmap.shape[1]


def project_to_mask(pixel, mask):
    """Nearest mask pixel (Euclidean, ties row-major); identity on the mask."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMaskError("cannot project onto an empty mask")
    u = int(round(float(pixel[0])))
    v = int(round(float(pixel[1])))
    h, w = mask.shape
    u = min(max(u, 0), w - 1)
    v = min(max(v, 0), h - 1)
    if mask[v, u]:
        return np.array([float(u), float(v)])
    nu, nv = _kernels.nearest_true_pixel(mask, u, v)
    return np.array([float(nu), float(nv)])


def arm_mode(p1, p2, q1, q2, alpha):
    """'single' iff the pick pair or the place pair is closer than alpha px."""
    d_pick = float(np.linalg.norm(np.asarray(p1, dtype=np.float64) - np.asarray(p2, dtype=np.float64)))
    d_place = float(np.linalg.norm(np.asarray(q1, dtype=np.float64) - np.asarray(q2, dtype=np.float64)))
    return "single" if (d_pick < alpha or d_place < alpha) else "dual"


def _net_heatmap(net, x):
    with no_grad():
        out = net.forward(x.astype(np.float32)[None])
    return out.data[0]


def _clamp_pixel(p, hw):
    h, w = hw
    return np.array([min(max(p[0], 0.0), w - 1.0), min(max(p[1], 0.0), h - 1.0)])


@dataclass
class PolicyDiagnostics:
    flow: object = None
    heatmaps: tuple = ()
    place_heatmaps: tuple = ()
    mean_flow_mag: float = None


def predict_action(obs, subgoal, models, config):
    """One bimanual action from a masked observation/subgoal depth pair."""
    mask = cloth_mask(obs)
    if not mask.any():
        raise EmptyMaskError("observation contains no cloth pixels")
    hw = obs.values.shape
    variant = config.variant
    use_flow_in = variant in ("ffn", "noflowplace", "nosplit")
    use_flow_place = variant in ("ffn", "noflowin", "nosplit")

    flow = None
    if use_flow_in or use_flow_place or config.refinement.enabled:
        flow = models.flow(obs, subgoal)

    if use_flow_in:
        base = flow.data.astype(np.float32)
    else:
        base = np.stack([obs.values, subgoal.values]).astype(np.float32)

    if variant == "nosplit":
        hm = _net_heatmap(models.picknet_joint, base)
        h1, h2 = hm[0], hm[1]
        p1 = project_to_mask(cell_to_pixel(*heatmap_argmax(h1)), mask)
        p2 = project_to_mask(cell_to_pixel(*heatmap_argmax(h2)), mask)
    else:
        h1 = _net_heatmap(models.picknet1, base)[0]
        p1 = project_to_mask(cell_to_pixel(*heatmap_argmax(h1)), mask)
        cond = gaussian_image(p1, CONDITION_SIGMA, hw)
        h2 = _net_heatmap(models.picknet2, np.concatenate([base, cond[None]]))[0]
        p2 = project_to_mask(cell_to_pixel(*heatmap_argmax(h2)), mask)

    place_maps = ()
    if use_flow_place:
        q1 = _clamp_pixel(p1 + np.array(query_flow(flow, p1)), hw)
        q2 = _clamp_pixel(p2 + np.array(query_flow(flow, p2)), hw)
    else:
        g1 = _net_heatmap(models.placenet1, base)[0]
        q1 = _clamp_pixel(cell_to_pixel(*heatmap_argmax(g1)), hw)
        cond = gaussian_image(q1, CONDITION_SIGMA, hw)
        g2 = _net_heatmap(models.placenet2, np.concatenate([base, cond[None]]))[0]
        q2 = _clamp_pixel(cell_to_pixel(*heatmap_argmax(g2)), hw)
        place_maps = (g1, g2)

    mode = arm_mode(p1, p2, q1, q2, config.alpha_px)
    action = PickPlaceAction(p1=p1, p2=p2, q1=q1, q2=q2, arm_mode=mode)
    mfm = mean_flow_magnitude(flow, mask) if flow is not None else None
    diag = PolicyDiagnostics(
        flow=flow, heatmaps=(h1, h2), place_heatmaps=place_maps, mean_flow_mag=mfm
    )
    return action, diag


def oracle_action(obs_state, goal_state, script_picks, camera, config):
    """Oracle policy: densified ground-truth flow + scripted pick points."""
    obs_img = render_depth(obs_state, camera)
    mask = cloth_mask(obs_img)
    if not mask.any():
        raise EmptyMaskError("observation contains no cloth pixels")
    flow = flow_for_states(obs_state, goal_state, camera)
    hw = obs_img.values.shape
    picks = [project_to_mask(np.asarray(p, dtype=np.float64), mask) for p in script_picks]
    if len(picks) == 1:
        picks = [picks[0], picks[0].copy()]
    p1, p2 = picks[0], picks[1]
    q1 = _clamp_pixel(p1 + np.array(query_flow(flow, p1)), hw)
    q2 = _clamp_pixel(p2 + np.array(query_flow(flow, p2)), hw)
    mode = arm_mode(p1, p2, q1, q2, config.alpha_px)
    action = PickPlaceAction(p1=p1, p2=p2, q1=q1, q2=q2, arm_mode=mode)
    return action, PolicyDiagnostics(flow=flow, mean_flow_mag=mean_flow_magnitude(flow, mask))


@dataclass
class RolloutStep:
    subgoal_index: int
    action: object  # None if the policy skipped (refinement satisfied)
    bound_ok: tuple
    mean_flow_mag: float
    inference_s: float


@dataclass
class RolloutResult:
    steps: list
    achieved_states: list  # post-settle state after finishing each subgoal
    final_state: object


class Policy:
    """Callable policy over depth images; oracle subclasses use sim context."""

    def __init__(self, models, config, camera):
        self.models = models
        self.config = config
        self.camera = camera

    def act(self, obs_state, obs_img, subgoal):
        t0 = time.perf_counter()
        action, diag = predict_action(obs_img, subgoal.depth, self.models, self.config)
        dt = time.perf_counter() - t0
        return action, diag, dt

    def flow_to_subgoal(self, obs_state, obs_img, subgoal):
        return self.models.flow(obs_img, subgoal.depth)


class OraclePolicy(Policy):
    """Ground-truth flow (densified) + scripted picks; needs sim states."""

    def __init__(self, config, camera):
        super().__init__(PolicyModels(), config, camera)

    def act(self, obs_state, obs_img, subgoal):
        t0 = time.perf_counter()
        action, diag = oracle_action(
            obs_state, subgoal.make_reference_state(), subgoal.script_picks(), self.camera, self.config
        )
        dt = time.perf_counter() - t0
        return action, diag, dt

    def flow_to_subgoal(self, obs_state, obs_img, subgoal):
        return flow_for_states(obs_state, subgoal.make_reference_state(), self.camera)


def rollout(start_state, goal_sequence, policy, camera, sim_config):
    """One action per subgoal; bind failures are recorded, not fatal."""
    state = start_state.copy()
    steps, achieved = [], []
    for gi, subgoal in enumerate(goal_sequence.subgoals):
        obs_img = render_depth(state, camera)
        action, diag, dt = policy.act(state, obs_img, subgoal)
        result = execute_pick_place(state, action, camera, sim_config, depth_image=obs_img)
        state = result.state
        steps.append(
            RolloutStep(
                subgoal_index=gi,
                action=action,
                bound_ok=result.bound_ok,
                mean_flow_mag=diag.mean_flow_mag,
                inference_s=dt,
            )
        )
        achieved.append(state.copy())
    return RolloutResult(steps=steps, achieved_states=achieved, final_state=state)


def rollout_refined(start_state, goal_sequence, policy, camera, sim_config):
    """Act per subgoal until mean flow drops below threshold, max 3 actions."""
    cfg = policy.config.refinement
    state = start_state.copy()
    steps, achieved = [], []
    for gi, subgoal in enumerate(goal_sequence.subgoals):
        for _ in range(cfg.max_actions):
            obs_img = render_depth(state, camera)
            mask = cloth_mask(obs_img)
            flow = policy.flow_to_subgoal(state, obs_img, subgoal)
            mfm = mean_flow_magnitude(flow, mask) if mask.any() else float("inf")
            if mfm < cfg.mean_flow_threshold_px:
                break
            action, diag, dt = policy.act(state, obs_img, subgoal)
            result = execute_pick_place(state, action, camera, sim_config, depth_image=obs_img)
            state = result.state
            steps.append(
                RolloutStep(
                    subgoal_index=gi,
                    action=action,
                    bound_ok=result.bound_ok,
                    mean_flow_mag=mfm,
                    inference_s=dt,
                )
            )
        achieved.append(state.copy())
    return RolloutResult(steps=steps, achieved_states=achieved, final_state=state)
