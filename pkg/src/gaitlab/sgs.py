"""Stable grasp sampling: diverse settled grasps for exploration resets.

Each candidate draws an object pose near home and four fingertip targets
inside an annulus volume around the object, solves per-finger IK, then lets
physics settle twice. A candidate is accepted only if, after both settling
windows, the object is held by enough fingertip contacts, nothing else
touches it, and it has come to rest. Accepted states are written to a JSONL
cache keyed by candidate index, so results are independent of how many
workers produced them.
"""

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np

from . import kernels
from .geometry import quat_conj, quat_from_axis_angle, quat_rotate, random_quat
from .scene import SceneConfig
from .sim import Simulation

# margin added to the fingertip radius by the pre-settle proximity gate;
# generous enough to cover object motion during the settle
PREFILTER_SLACK = 0.012

CACHE_VERSION = 1

SETTLE_VEL = 0.02       # m/s
SETTLE_ANGVEL = 0.2     # rad/s


@dataclass(frozen=True)
class GraspSampleConfig:
    """Knobs of the sampling distribution and acceptance test."""

    annulus_inner_frac: float = 0.7    # x object circumradius
    annulus_outer_frac: float = 1.6
    pose_jitter: float = 0.01          # m, uniform box around object home
    orientation_mode: str = "yaw"      # yaw | uniform | identity
    min_contacts: int = 2
    settle_time: float = 0.5           # s before the first acceptance check
    verify_time: float = 1.0           # s between the two acceptance checks
    max_drift: float = 0.002           # m of object travel over verify_time
    require_fingertip_only: bool = True

    def __post_init__(self):
        if self.orientation_mode not in ("yaw", "uniform", "identity"):
            raise ValueError(f"unknown orientation_mode {self.orientation_mode!r}")
        if not 0 < self.annulus_inner_frac < self.annulus_outer_frac:
            raise ValueError("annulus fractions must satisfy 0 < inner < outer")


@dataclass
class GraspSample:
    """One accepted grasp: the settled state plus provenance metadata."""

    candidate: int
    state: np.ndarray
    n_contacts: int
    fingertip_only: bool
    obj_pos: np.ndarray
    obj_quat: np.ndarray
    tip_targets: np.ndarray
    ik_err: float


def sample_fingertip_targets(rng, center, circumradius: float,
                             cfg: GraspSampleConfig) -> np.ndarray:
    """Four points uniform over the annulus volume around the object center.

    Directions are isotropic; the radial law r ~ (r_in^3 + u (r_out^3 -
    r_in^3))^(1/3) makes the density uniform per unit volume, not per unit
    radius.
    """
    r_in = cfg.annulus_inner_frac * circumradius
    r_out = cfg.annulus_outer_frac * circumradius
    targets = np.empty((kernels.N_FINGERS, 3))
    for f in range(kernels.N_FINGERS):
        d = rng.standard_normal(3)
        n = np.linalg.norm(d)
        while n < 1e-12:
            d = rng.standard_normal(3)
            n = np.linalg.norm(d)
        u = rng.uniform()
        r = (r_in ** 3 + u * (r_out ** 3 - r_in ** 3)) ** (1.0 / 3.0)
        targets[f] = np.asarray(center) + d / n * r
    return targets


def _sample_pose(rng, cfg: GraspSampleConfig, home):
    pos = np.asarray(home) + rng.uniform(-cfg.pose_jitter, cfg.pose_jitter, size=3)
    if cfg.orientation_mode == "identity":
        quat = np.array([1.0, 0.0, 0.0, 0.0])
    elif cfg.orientation_mode == "yaw":
        quat = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]),
                                    rng.uniform(0.0, 2.0 * np.pi))
    else:
        quat = random_quat(rng)
    return pos, quat


def _settled_ok(sim: Simulation, cfg: GraspSampleConfig):
    reports, diag = sim.query_contacts()
    if diag.n_tip_contacts < cfg.min_contacts:
        return False, diag
    if cfg.require_fingertip_only and diag.nonfingertip_contact:
        return False, diag
    if np.linalg.norm(sim.obj_linvel) >= SETTLE_VEL:
        return False, diag
    if np.linalg.norm(sim.obj_angvel) >= SETTLE_ANGVEL:
        return False, diag
    return True, diag


def sample_stable_grasp(sim: Simulation, cfg: GraspSampleConfig, seed,
                        candidate: int = 0) -> GraspSample | None:
    """Run one candidate; returns the accepted grasp or None.

    The outcome is a pure function of (scene, cfg, seed): every random draw
    comes from a SeedSequence([seed, candidate]) stream.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(candidate)]))
    scene = sim.scene
    pos, quat = _sample_pose(rng, cfg, scene.config.object_home)
    targets = sample_fingertip_targets(rng, pos, scene.shape.circumradius, cfg)
    q_ik, ik_err = scene.hand.solve_fingertip_ik(targets,
                                                 q_init=scene.hand.rest_pose())
    # cheap geometric gate before paying for the settle: a fingertip whose
    # IK-achieved pose sits far off the surface cannot be touching after the
    # settle, and fewer than min_contacts touching tips can never pass. The
    # distance bound is conservative, so no viable candidate is lost.
    tips = scene.hand.fingertips(q_ik)
    qc = quat_conj(quat)
    slack = scene.hand.fingertip_radius + PREFILTER_SLACK
    near = 0
    for f in range(kernels.N_FINGERS):
        p_body = quat_rotate(qc, tips[f] - pos)
        if scene.shape.surface_distance_lower(p_body) <= slack:
            near += 1
    if near < cfg.min_contacts:
        return None
    st = scene.initial_state(q=q_ik)
    st[kernels.S_OP:kernels.S_OP + 3] = pos
    st[kernels.S_OQ:kernels.S_OQ + 4] = quat
    sim.restore_snapshot(st)
    try:
        # settle in two halves (same total step count as one settle call)
        n_settle = max(1, int(round(cfg.settle_time / scene.config.control_dt)))
        zero = np.zeros(kernels.N_JOINTS)
        for _ in range(n_settle // 2):
            sim.step(zero)
        # abort candidates whose object has already fallen out of reach:
        # untouched and far below home it cannot come back
        if sim.obj_pos[2] < scene.config.object_home[2] - 0.03:
            _, diag = sim.query_contacts()
            if diag.n_tip_contacts == 0:
                return None
        for _ in range(n_settle - n_settle // 2):
            sim.step(zero)
        ok, _ = _settled_ok(sim, cfg)
        if not ok:
            return None
        # verify the grasp survives a second window without creeping: an
        # instantaneous velocity gate alone lets slow drifts through
        pos_before = sim.obj_pos.copy()
        sim.settle(cfg.verify_time)
        ok, diag = _settled_ok(sim, cfg)
        if not ok:
            return None
        if np.linalg.norm(sim.obj_pos - pos_before) >= cfg.max_drift:
            return None
    except Exception:
        return None
    return GraspSample(candidate=candidate,
                       state=sim.save_snapshot(),
                       n_contacts=diag.n_tip_contacts,
                       fingertip_only=not diag.nonfingertip_contact,
                       obj_pos=sim.obj_pos.copy(),
                       obj_quat=sim.obj_quat.copy(),
                       tip_targets=targets,
                       ik_err=ik_err)


def build_cache(path, scene_config: SceneConfig, count: int, seed: int,
                cfg: GraspSampleConfig | None = None, workers: int = 1,
                max_candidates: int | None = None, progress=None) -> dict:
    """Sample grasps until `count` are accepted and write a JSONL cache.

    Candidates are seeded individually, so the cache bytes depend only on
    (scene_config, cfg, seed, count), never on worker count or scheduling.
    Returns the header dict.
    """
    cfg = cfg if cfg is not None else GraspSampleConfig()
    if max_candidates is None:
        max_candidates = max(2000, 1500 * count)
    local = threading.local()

    def run_candidate(i: int):
        if not hasattr(local, "sim"):
            local.sim = Simulation(scene_config)
        return i, sample_stable_grasp(local.sim, cfg, seed, candidate=i)

    accepted: list[GraspSample] = []
    n_tried = 0
    batch = max(32, 4 * workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        while len(accepted) < count and n_tried < max_candidates:
            idxs = range(n_tried, min(n_tried + batch, max_candidates))
            results = list(pool.map(run_candidate, idxs))
            n_tried = idxs.stop
            for i, samp in results:        # candidate order, not finish order
                if samp is not None:
                    accepted.append(samp)
            if progress is not None:
                progress(len(accepted), n_tried)
    if len(accepted) < count:
        raise RuntimeError(
            f"accepted only {len(accepted)}/{count} grasps after "
            f"{n_tried} candidates; the scene may make stable grasps rare")
    accepted = accepted[:count]
    header = {
        "kind": "grasp_cache",
        "version": CACHE_VERSION,
        "scene": scene_config.to_dict(),
        "scene_hash": scene_config.config_hash(),
        "seed": int(seed),
        "count": count,
        "sgs": asdict(cfg),
        "candidates_tried": accepted[-1].candidate + 1,
        "state_len": kernels.S_LEN,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for s in accepted:
            fh.write(json.dumps({
                "candidate": s.candidate,
                "state": [float(x) for x in s.state],
                "n_contacts": s.n_contacts,
                "fingertip_only": s.fingertip_only,
                "obj_pos": [float(x) for x in s.obj_pos],
                "obj_quat": [float(x) for x in s.obj_quat],
                "tip_targets": [[float(x) for x in t] for t in s.tip_targets],
                "ik_err": float(s.ik_err),
            }, sort_keys=True) + "\n")
    return header


def load_cache(path):
    """Read a grasp cache; returns (header, states (n, state_len), entries)."""
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"grasp cache {path} is empty")
    header = json.loads(lines[0])
    if header.get("kind") != "grasp_cache":
        raise ValueError(f"{path} is not a grasp cache (kind={header.get('kind')!r})")
    if header.get("version") != CACHE_VERSION:
        raise ValueError(f"unsupported grasp cache version {header.get('version')!r}")
    entries = [json.loads(ln) for ln in lines[1:]]
    if len(entries) != header["count"]:
        raise ValueError(f"{path} holds {len(entries)} grasps, header says "
                         f"{header['count']}")
    states = np.array([e["state"] for e in entries], dtype=np.float64)
    return header, states, entries
