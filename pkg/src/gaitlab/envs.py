"""Re-orientation environment: observations, reward, termination.

The agent commands per-step changes of the joint set-points and observes
only proprioception (joint positions and set-points) and fingertip touch
(contact point, normal force, contact normal direction per finger). Reward
pays for object angular velocity along a fixed hand-frame axis while the
grasp stays precise: at least three fingertip contacts, rotation well
aligned with the axis, and no palm or link touching the object.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .scene import SceneConfig
from .sim import Simulation

R_MAX = 0.5            # reward ceiling, rad/s
PHI_MAX = 0.5          # max angle between rotation and target axis, rad
OMEGA_EPS = 1e-3       # below this speed the rotation direction is undefined
MIN_CONTACTS = 3       # fingertip contacts required for positive reward
HORIZON = 500
DROP_Z = -0.15         # below the palm by this much ends the episode
ESCAPE_RADIUS = 0.30
LOST_CONTACT_STEPS = 25
LOST_CONTACT_MIN = 2

AXES = {"+z": np.array([0.0, 0.0, 1.0]), "+x": np.array([1.0, 0.0, 0.0]),
        "-z": np.array([0.0, 0.0, -1.0]), "-x": np.array([-1.0, 0.0, 0.0])}

N_FINGERS = kernels.N_FINGERS
OBS_BLOCKS = (
    ("joint_pos", 16),
    ("joint_target", 16),
    ("contact_pos", 12),
    ("contact_force", 4),
    ("contact_normal", 12),
)
OBS_DIM = 60    # with every block enabled


@dataclass(frozen=True)
class AxisSpec:
    """Target rotation axis, fixed in the hand frame."""

    name: str = "+z"

    def __post_init__(self):
        if self.name not in AXES:
            raise ValueError(f"unknown axis {self.name!r}; expected one of {sorted(AXES)}")

    @property
    def unit(self) -> np.ndarray:
        return AXES[self.name]


@dataclass(frozen=True)
class ObservationMask:
    """Which observation blocks the policy receives.

    Masked blocks are omitted entirely, so the observation dimension is the
    sum of the enabled block sizes.
    """

    joint_pos: bool = True
    joint_target: bool = True
    contact_pos: bool = True
    contact_force: bool = True
    contact_normal: bool = True

    def __post_init__(self):
        if not any(getattr(self, name) for name, _ in OBS_BLOCKS):
            raise ValueError("observation mask disables every block")

    def layout(self) -> tuple:
        """(block, offset, length) for each enabled block, in order."""
        out = []
        off = 0
        for name, size in OBS_BLOCKS:
            if getattr(self, name):
                out.append((name, off, size))
                off += size
        return tuple(out)

    @property
    def dim(self) -> int:
        return sum(size for name, size in OBS_BLOCKS if getattr(self, name))


FULL_OBS = ObservationMask()
PROPRIO_ONLY = ObservationMask(contact_pos=False, contact_force=False,
                               contact_normal=False)
NO_JOINT_TARGET = ObservationMask(joint_target=False)
JOINTS_AND_NORMALS = ObservationMask(joint_target=False, contact_pos=False,
                                     contact_force=False, contact_normal=True)

OBS_MASKS = {
    "full": FULL_OBS,
    "proprio_only": PROPRIO_ONLY,
    "no_joint_target": NO_JOINT_TARGET,
    "joints_and_normals": JOINTS_AND_NORMALS,
}

OBS_LAYOUT = FULL_OBS.layout()


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean observation noise and external perturbation settings."""

    joint_position_sd: float = 0.0     # rad, additive on joint positions
    contact_position_sd: float = 0.0   # m, additive on contact points
    contact_force_frac: float = 0.0    # multiplicative fraction on forces
    perturbation_force: float = 0.0    # N, object wrench magnitude

    def any_noise(self) -> bool:
        return (self.joint_position_sd > 0 or self.contact_position_sd > 0
                or self.contact_force_frac > 0)


PERTURB_PERIOD = 1.0     # s between perturbation onsets
PERTURB_DURATION = 0.2   # s each perturbation lasts


def derive_contact_normal(contact_pos, tip_center):
    """Unit direction from the fingertip center through the contact point.

    On a spherical fingertip this is the inward surface normal, so tactile
    position sensing alone determines it. Returns zeros for a degenerate
    (coincident) pair.
    """
    d = np.asarray(contact_pos, dtype=np.float64) - np.asarray(tip_center, dtype=np.float64)
    n = np.linalg.norm(d)
    if n < 1e-9:
        return np.zeros(3)
    return d / n


def axis_misalignment(omega, axis_unit, eps: float = OMEGA_EPS) -> float:
    """Angle between the rotation and the target axis; zero when still."""
    w = np.asarray(omega, dtype=np.float64)
    mag = np.linalg.norm(w)
    if mag < eps:
        return 0.0
    c = float(np.dot(w, axis_unit) / mag)
    return float(np.arccos(min(1.0, max(-1.0, c))))


@dataclass
class RewardBreakdown:
    value: float
    omega_axis: float        # signed rotation speed along the axis
    misalignment: float
    n_contacts: int
    fingertip_only: bool
    precise: bool            # all grasp conditions held


def compute_reward(omega, axis_unit, n_contacts: int, fingertip_only: bool,
                   r_max: float = R_MAX, phi_max: float = PHI_MAX,
                   min_contacts: int = MIN_CONTACTS,
                   eps: float = OMEGA_EPS) -> RewardBreakdown:
    """Axis-aligned rotation reward under grasp-quality gating.

    While the grasp is precise (enough fingertip contacts, rotation within
    phi_max of the axis, nothing but fingertips touching) the reward is the
    axis-aligned speed clipped from above at r_max. Otherwise only the
    non-positive part passes through, so misbehavior is never rewarded but
    counter-rotation still costs.
    """
    w_axis = float(np.dot(omega, axis_unit))
    phi = axis_misalignment(omega, axis_unit, eps)
    precise = (n_contacts >= min_contacts) and (phi <= phi_max) and fingertip_only
    if precise:
        value = min(r_max, w_axis)
    else:
        value = min(0.0, w_axis)
    return RewardBreakdown(value=value, omega_axis=w_axis, misalignment=phi,
                           n_contacts=int(n_contacts),
                           fingertip_only=bool(fingertip_only), precise=precise)


def assemble_observation(q, q_des, reports, tip_centers, mask: ObservationMask,
                         noise: NoiseSpec | None = None, rng=None,
                         out: np.ndarray | None = None) -> np.ndarray:
    """Build the observation vector for a mask (length mask.dim).

    Disabled blocks are omitted entirely, so the vector length varies with
    the mask; fingers currently out of contact contribute zeros inside the
    enabled contact blocks. reports: per-finger tuple (touching, pos(3),
    force) or None. Contact normals are always re-derived from the (possibly
    noisy) contact point and the fingertip center, never taken from the
    simulator. The noise stream draws a fixed count of 32 normals per call
    whenever a NoiseSpec is supplied, so zero-sigma noise is bit-identical to
    no noise and the stream stays aligned across sweep points and masks.
    """
    obs = out if out is not None else np.zeros(mask.dim)
    obs[:] = 0.0
    if noise is not None and rng is not None:
        draws = rng.standard_normal(32)
    else:
        draws = None
    offsets = {name: off for name, off, _ in mask.layout()}
    if mask.joint_pos:
        q_obs = np.asarray(q, dtype=np.float64).copy()
        if draws is not None:
            q_obs += noise.joint_position_sd * draws[0:16]
        o = offsets["joint_pos"]
        obs[o:o + 16] = q_obs
    if mask.joint_target:
        o = offsets["joint_target"]
        obs[o:o + 16] = q_des
    for f in range(N_FINGERS):
        rep = reports[f]
        if rep is None:
            continue
        pos = np.array(rep[1], dtype=np.float64)
        force = float(rep[2])
        if draws is not None:
            pos = pos + noise.contact_position_sd * draws[16 + 3 * f:19 + 3 * f]
            force = max(0.0, force * (1.0 + noise.contact_force_frac * draws[28 + f]))
        if mask.contact_pos:
            o = offsets["contact_pos"]
            obs[o + 3 * f:o + 3 * f + 3] = pos
        if mask.contact_force:
            o = offsets["contact_force"]
            obs[o + f] = force
        if mask.contact_normal:
            normal = derive_contact_normal(pos, tip_centers[f])
            o = offsets["contact_normal"]
            obs[o + 3 * f:o + 3 * f + 3] = normal
    return obs


@dataclass
class EpisodeRecord:
    """Per-step trace of one episode, writable as CSV."""

    steps: list = field(default_factory=list)
    FIELDS = ("step", "reward", "omega_axis", "n_contacts", "misalignment",
              "cum_rotation")

    def append(self, step, reward, omega_axis, n_contacts, misalignment,
               cum_rotation):
        self.steps.append((step, reward, omega_axis, n_contacts, misalignment,
                           cum_rotation))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.FIELDS)
            for row in self.steps:
                w.writerow([repr(x) if isinstance(x, float) else x for x in row])


class ReorientEnv:
    """Single-axis in-hand re-orientation task."""

    def __init__(self, scene_config: SceneConfig | None = None,
                 axis: AxisSpec | str = "+z",
                 mask: ObservationMask = FULL_OBS,
                 noise: NoiseSpec = NoiseSpec(),
                 initial_states: np.ndarray | None = None,
                 horizon: int = HORIZON):
        self.sim = Simulation(scene_config)
        self.axis = AxisSpec(axis) if isinstance(axis, str) else axis
        self.mask = mask
        self.noise = noise
        self.horizon = horizon
        self.initial_states = None
        if initial_states is not None:
            arr = np.asarray(initial_states, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != kernels.S_LEN:
                raise ValueError("initial_states must have shape (n, state_len)")
            if len(arr) == 0:
                raise ValueError("initial_states is empty")
            self.initial_states = arr
        self._canonical = None
        self._obs = np.zeros(self.mask.dim)
        self._reset_rng = None
        self._noise_rng = None
        self._perturb_rng = None
        self.t = 0
        self.cum_rotation = 0.0
        self._lost_contact_run = 0
        self._act_ema = np.zeros(16)

    @property
    def action_dim(self) -> int:
        return 16

    @property
    def obs_dim(self) -> int:
        return self.mask.dim

    def _canonical_state(self) -> np.ndarray:
        if self._canonical is None:
            snap = self.sim.save_snapshot()
            self.sim.restore_snapshot(self.sim.scene.canonical_grasp())
            self.sim.settle(1.0)
            self._canonical = self.sim.save_snapshot()
            self.sim.restore_snapshot(snap)
        return self._canonical

    def reset(self, seed: int):
        """Start a new episode; a seed is required for reproducibility."""
        ss = np.random.SeedSequence(seed)
        s_reset, s_noise, s_perturb = ss.spawn(3)
        self._reset_rng = np.random.default_rng(s_reset)
        self._noise_rng = np.random.default_rng(s_noise)
        self._perturb_rng = np.random.default_rng(s_perturb)
        if self.initial_states is not None:
            idx = int(self._reset_rng.integers(len(self.initial_states)))
            self.sim.restore_snapshot(self.initial_states[idx])
        else:
            self.sim.restore_snapshot(self._canonical_state())
        self.t = 0
        self.cum_rotation = 0.0
        self._lost_contact_run = 0
        self._act_ema[:] = 0.0
        reports, diag = self.sim.query_contacts()
        return self._observe(reports), {"n_contacts": diag.n_tip_contacts}

    def step(self, action):
        """Apply one set-point command; returns (obs, reward, terminated,
        truncated, info)."""
        if self.t % int(round(PERTURB_PERIOD / self.sim.scene.config.control_dt)) == 0:
            self._maybe_perturb()
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        # low-pass the command stream: smooth strokes both for the policy
        # and for its exploration noise
        beta = self.sim.scene.config.action_smoothing
        self._act_ema *= beta
        self._act_ema += (1.0 - beta) * a
        dq_des = self.sim.scene.config.action_limit * self._act_ema
        reports, diag = self.sim.step(dq_des)
        omega = self.sim.obj_angvel.copy()
        rb = compute_reward(omega, self.axis.unit, diag.n_tip_contacts,
                            not diag.nonfingertip_contact)
        self.t += 1
        self.cum_rotation += rb.omega_axis * self.sim.scene.config.control_dt
        if diag.n_tip_contacts < LOST_CONTACT_MIN:
            self._lost_contact_run += 1
        else:
            self._lost_contact_run = 0
        dropped = self.sim.obj_pos[2] < DROP_Z
        escaped = float(np.linalg.norm(self.sim.obj_pos)) > ESCAPE_RADIUS
        lost = self._lost_contact_run >= LOST_CONTACT_STEPS
        terminated = bool(dropped or escaped or lost)
        truncated = bool(not terminated and self.t >= self.horizon)
        obs = self._observe(reports)
        flags = [False] * N_FINGERS
        for r in reports:
            flags[r.finger] = True
        info = {
            "reward_breakdown": rb,
            "n_contacts": diag.n_tip_contacts,
            "fingertip_only": not diag.nonfingertip_contact,
            "contact_flags": tuple(flags),
            "cum_rotation": self.cum_rotation,
            "omega_axis": rb.omega_axis,
            "misalignment": rb.misalignment,
        }
        if terminated:
            info["termination"] = ("dropped" if dropped else
                                   "escaped" if escaped else "lost_contact")
        return obs, rb.value, terminated, truncated, info

    def get_state(self) -> dict:
        """Complete episode state for exact checkpoint/resume."""
        return {
            "sim": self.sim.save_snapshot(),
            "t": self.t,
            "cum_rotation": self.cum_rotation,
            "lost_contact_run": self._lost_contact_run,
            "act_ema": self._act_ema.copy(),
            "reset_rng": self._reset_rng.bit_generator.state,
            "noise_rng": self._noise_rng.bit_generator.state,
            "perturb_rng": self._perturb_rng.bit_generator.state,
        }

    def set_state(self, d: dict):
        self.sim.restore_snapshot(np.asarray(d["sim"], dtype=np.float64))
        self.t = int(d["t"])
        self.cum_rotation = float(d["cum_rotation"])
        self._lost_contact_run = int(d["lost_contact_run"])
        self._act_ema = np.asarray(d["act_ema"], dtype=np.float64).copy()
        self._reset_rng = np.random.default_rng()
        self._reset_rng.bit_generator.state = d["reset_rng"]
        self._noise_rng = np.random.default_rng()
        self._noise_rng.bit_generator.state = d["noise_rng"]
        self._perturb_rng = np.random.default_rng()
        self._perturb_rng.bit_generator.state = d["perturb_rng"]

    def _maybe_perturb(self):
        # direction is always drawn so the stream advances identically
        # whether or not the magnitude is zero
        if self._perturb_rng is None:
            return
        d = self._perturb_rng.standard_normal(3)
        mag = float(np.linalg.norm(d))
        if self.noise.perturbation_force <= 0.0 or mag < 1e-12:
            return
        force = d / mag * self.noise.perturbation_force
        self.sim.apply_external_force(force, PERTURB_DURATION)

    def _observe(self, reports):
        per_finger = [None] * N_FINGERS
        for r in reports:
            per_finger[r.finger] = (True, r.position, r.normal_force)
        tips = self.sim.fingertips()
        return assemble_observation(self.sim.q, self.sim.q_des, per_finger,
                                    tips, self.mask, noise=self.noise,
                                    rng=self._noise_rng, out=self._obs).copy()


class SyncVecEnv:
    """Sequential batch of environments with per-env auto-reset."""

    def __init__(self, make_env, n_envs: int, base_seed: int):
        self.envs = [make_env(i) for i in range(n_envs)]
        self.n_envs = n_envs
        self.base_seed = base_seed
        self._episode_counter = list(range(n_envs))
        self.obs_dim = self.envs[0].obs_dim
        self.obs = np.zeros((n_envs, self.obs_dim))

    def reset_all(self):
        for i, env in enumerate(self.envs):
            self.obs[i], _ = env.reset(self._seed_for(i))
        return self.obs.copy()

    def _seed_for(self, i: int) -> int:
        seed = self.base_seed + 1000003 * self._episode_counter[i]
        self._episode_counter[i] += self.n_envs
        return seed

    def step(self, actions):
        """Steps every env; auto-resets finished ones.

        Returns (obs, rewards, terminated, truncated, infos). For finished
        envs the returned obs is the first observation of the next episode
        and info carries the final episode stats.
        """
        rewards = np.zeros(self.n_envs)
        terminated = np.zeros(self.n_envs, dtype=bool)
        truncated = np.zeros(self.n_envs, dtype=bool)
        infos = [None] * self.n_envs
        for i, env in enumerate(self.envs):
            obs, r, term, trunc, info = env.step(actions[i])
            rewards[i] = r
            terminated[i] = term
            truncated[i] = trunc
            if term or trunc:
                info["final_obs"] = obs
                info["final_cum_rotation"] = env.cum_rotation
                info["final_t"] = env.t
                obs, _ = env.reset(self._seed_for(i))
            self.obs[i] = obs
            infos[i] = info
        return self.obs.copy(), rewards, terminated, truncated, infos

    def get_state(self) -> dict:
        return {"envs": [e.get_state() for e in self.envs],
                "episode_counter": list(self._episode_counter),
                "obs": self.obs.copy()}

    def set_state(self, d: dict):
        for e, s in zip(self.envs, d["envs"]):
            e.set_state(s)
        self._episode_counter = list(d["episode_counter"])
        self.obs = np.asarray(d["obs"], dtype=np.float64).copy()
