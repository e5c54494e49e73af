"""Evaluation protocols for trained re-orientation policies.

Covers fixed-seed episode batteries, observation-noise robustness sweeps,
cross-shape transfer grids, observation-channel ablations, and finger-gait
statistics. Every protocol derives its episode seeds from one root seed, so
two runs of the same protocol are bitwise identical.
"""

import os
from dataclasses import dataclass, asdict, replace

import numpy as np
import torch

from .envs import (AxisSpec, NoiseSpec, ObservationMask, ReorientEnv,
                   OBS_MASKS, HORIZON, EpisodeRecord)
from .ppo import TrainConfig, Trainer, load_policy_bundle
from .scene import SceneConfig

TWO_PI = 2.0 * np.pi


@dataclass
class EpisodeResult:
    seed: int
    ret: float
    length: int
    cum_rotation: float
    dropped: bool
    termination: str          # "" when the horizon was reached
    mean_contacts: float
    contact_switches: int

    @property
    def full_turn(self) -> bool:
        return self.cum_rotation > TWO_PI


@dataclass
class EvalSummary:
    n_episodes: int
    mean_return: float
    mean_cum_rotation: float
    mean_length: float
    drop_rate: float
    full_turn_rate: float
    mean_contact_switches: float
    episodes: list

    def to_dict(self) -> dict:
        d = asdict(self)
        d["episodes"] = [asdict(e) for e in self.episodes]
        return d


def count_contact_switches(flags: np.ndarray, debounce: int = 2) -> int:
    """Number of debounced make/break transitions summed over fingers.

    flags is a (T, n_fingers) boolean array. A finger's state only flips
    after the raw signal has held the opposite value for `debounce`
    consecutive steps, so single-step chatter does not count as gaiting.
    """
    flags = np.asarray(flags, dtype=bool)
    if flags.ndim != 2 or flags.shape[0] == 0:
        return 0
    total = 0
    for f in range(flags.shape[1]):
        state = flags[0, f]
        run = 0
        for t in range(1, flags.shape[0]):
            if flags[t, f] != state:
                run += 1
                if run >= debounce:
                    state = flags[t, f]
                    run = 0
                    total += 1
            else:
                run = 0
    return total


def run_episode(env: ReorientEnv, policy, normalizer, seed: int,
                deterministic: bool = True,
                record: EpisodeRecord | None = None) -> EpisodeResult:
    obs, _ = env.reset(seed)
    ret = 0.0
    contacts = []
    flags = []
    termination = ""
    t = 0
    while True:
        norm = normalizer.normalize(obs)
        with torch.no_grad():
            action, _ = policy.act(torch.from_numpy(norm), deterministic)
        obs, r, term, trunc, info = env.step(action.numpy())
        ret += r
        t += 1
        contacts.append(info["n_contacts"])
        flags.append(info["contact_flags"])
        if record is not None:
            record.append(t, r, info["omega_axis"], info["n_contacts"],
                          info["misalignment"], info["cum_rotation"])
        if term or trunc:
            termination = info.get("termination", "")
            break
    return EpisodeResult(
        seed=seed, ret=ret, length=t, cum_rotation=env.cum_rotation,
        dropped=termination == "dropped", termination=termination,
        mean_contacts=float(np.mean(contacts)),
        contact_switches=count_contact_switches(np.array(flags)))


def episode_seeds(root_seed: int, n: int) -> list:
    return [int(s) for s in
            np.random.SeedSequence(root_seed).generate_state(n, np.uint32)]


def evaluate(policy, normalizer, scene_config: SceneConfig,
             axis: str = "+z", mask: ObservationMask | str = "full",
             noise: NoiseSpec = NoiseSpec(), n_episodes: int = 50,
             seed: int = 0, deterministic: bool = True,
             initial_states: np.ndarray | None = None,
             horizon: int = HORIZON) -> EvalSummary:
    if isinstance(mask, str):
        mask = OBS_MASKS[mask]
    env = ReorientEnv(scene_config, axis=AxisSpec(axis), mask=mask,
                      noise=noise, initial_states=initial_states,
                      horizon=horizon)
    episodes = [run_episode(env, policy, normalizer, s, deterministic)
                for s in episode_seeds(seed, n_episodes)]
    return EvalSummary(
        n_episodes=n_episodes,
        mean_return=float(np.mean([e.ret for e in episodes])),
        mean_cum_rotation=float(np.mean([e.cum_rotation for e in episodes])),
        mean_length=float(np.mean([e.length for e in episodes])),
        drop_rate=float(np.mean([e.dropped for e in episodes])),
        full_turn_rate=float(np.mean([e.full_turn for e in episodes])),
        mean_contact_switches=float(np.mean([e.contact_switches
                                             for e in episodes])),
        episodes=episodes)


def resolve_initial_states(source) -> np.ndarray | None:
    """Map an initial-state source to a state array.

    Accepts None / "canonical" (settled canonical grasp), a grasp cache
    path, or an already-loaded state array.
    """
    if source is None or (isinstance(source, str) and source == "canonical"):
        return None
    if isinstance(source, str):
        if not os.path.exists(source):
            raise FileNotFoundError(
                f"initial_state_source {source!r} does not exist; rebuild "
                "the grasp cache or evaluate with 'canonical'")
        from .sgs import load_cache
        _, states, _ = load_cache(source)
        return states
    return np.asarray(source, dtype=np.float64)


def evaluate_checkpoint(path, n_episodes: int = 50, seed: int = 0,
                        noise: NoiseSpec | None = None,
                        shape: str | None = None,
                        initial_states=None,
                        deterministic: bool = True) -> EvalSummary:
    """Evaluate a training checkpoint under its own config, with optional
    noise/shape overrides.

    initial_states: None reuses the checkpoint's own source (its grasp
    cache, or the canonical grasp); "canonical" or a cache path or a state
    array override it.
    """
    policy, _, norm, cfg, _ = load_policy_bundle(path)
    scene_kw = dict(cfg.scene_overrides or {})
    scene = SceneConfig(shape=shape or cfg.shape, **scene_kw)
    if initial_states is None:
        initial_states = cfg.initial_state_source
    init = resolve_initial_states(initial_states)
    return evaluate(policy, norm, scene, axis=cfg.axis, mask=cfg.obs_mask,
                    noise=noise or NoiseSpec(), n_episodes=n_episodes,
                    seed=seed, deterministic=deterministic,
                    initial_states=init, horizon=cfg.horizon)


# sweepable dimension -> NoiseSpec field
SWEEP_DIMENSIONS = {
    "joint_position": "joint_position_sd",
    "contact_position": "contact_position_sd",
    "contact_force": "contact_force_frac",
    "perturbation_force": "perturbation_force",
}

# default grids bracket the anchor magnitudes (5 mm, 25%, 1 N)
DEFAULT_SWEEP_GRIDS = {
    "joint_position": (0.0, 0.01, 0.02, 0.05),
    "contact_position": (0.0, 0.002, 0.005, 0.01),
    "contact_force": (0.0, 0.10, 0.25, 0.50),
    "perturbation_force": (0.0, 0.5, 1.0, 2.0),
}


@dataclass(frozen=True)
class SweepSpec:
    """One robustness sweep: a grid of magnitudes along one noise dimension.

    The grid must start at 0 (the clean anchor) and ascend.
    """
    dimension: str
    magnitudes: tuple
    episodes: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.dimension not in SWEEP_DIMENSIONS:
            raise ValueError(
                f"unknown sweep dimension {self.dimension!r}; expected one "
                f"of {sorted(SWEEP_DIMENSIONS)}")
        mags = tuple(float(m) for m in self.magnitudes)
        if not mags or mags[0] != 0.0:
            raise ValueError("magnitude grid must include 0 first "
                             "(baseline anchor)")
        if any(m < 0 for m in mags):
            raise ValueError("magnitudes must be non-negative")
        if list(mags) != sorted(mags):
            raise ValueError("magnitudes must be sorted ascending")
        object.__setattr__(self, "magnitudes", mags)

    def noise_at(self, magnitude: float) -> NoiseSpec:
        return NoiseSpec(**{SWEEP_DIMENSIONS[self.dimension]: magnitude})


def _mask_blocks(mask: ObservationMask, dimension: str) -> bool:
    """True when the policy cannot see any channel the dimension feeds.

    Contact-position noise also propagates into the derived normals, so it
    is observable whenever positions OR normals are on.
    """
    if dimension == "joint_position":
        return not mask.joint_pos
    if dimension == "contact_position":
        return not (mask.contact_pos or mask.contact_normal)
    if dimension == "contact_force":
        return not mask.contact_force
    return False  # perturbation acts on the dynamics, not the observation


def robustness_sweep(path, spec: SweepSpec,
                     initial_states=None) -> list:
    """Evaluate one checkpoint along a noise-magnitude grid.

    Returns [(magnitude, EvalSummary, stderr_of_return), ...]. Every grid
    point reuses the same episode seeds, so the zero point reproduces the
    clean evaluation bit for bit.
    """
    _, _, _, cfg, _ = load_policy_bundle(path)
    mask = OBS_MASKS[cfg.obs_mask]
    if _mask_blocks(mask, spec.dimension):
        raise ValueError(
            f"sweep dimension {spec.dimension!r} is invisible to a policy "
            f"trained with mask {cfg.obs_mask!r}")
    out = []
    for mag in spec.magnitudes:
        summary = evaluate_checkpoint(path, n_episodes=spec.episodes,
                                      seed=spec.seed, noise=spec.noise_at(mag),
                                      initial_states=initial_states)
        rets = [e.ret for e in summary.episodes]
        stderr = float(np.std(rets, ddof=1) / np.sqrt(len(rets)))
        out.append((mag, summary, stderr))
    return out


@dataclass
class TransferResult:
    """Cross-shape generalization grid: rows = training shape, cols =
    evaluation shape. normalized[i, j] = raw[i, j] / raw[i, i]; rows with a
    non-positive self-score cannot be normalized and are flagged."""
    shapes: list
    raw: np.ndarray
    normalized: np.ndarray
    undefined_rows: list

    def to_dict(self) -> dict:
        return {"shapes": list(self.shapes), "raw": self.raw.tolist(),
                "normalized": self.normalized.tolist(),
                "undefined_rows": list(self.undefined_rows)}


def transfer_matrix(checkpoints: dict, shapes: list,
                    caches: dict | None = None, n_episodes: int = 50,
                    seed: int = 0) -> TransferResult:
    """Evaluate every shape's policy on every shape in the list.

    checkpoints maps shape -> checkpoint path; caches optionally maps shape
    -> initial-state source used when evaluating ON that shape (defaults to
    the canonical grasp, which exists for every shape).
    """
    n = len(shapes)
    raw = np.zeros((n, n))
    for i, src in enumerate(shapes):
        for j, dst in enumerate(shapes):
            # the training cache belongs to the source shape; off-shape
            # evaluation must use the destination shape's states
            init = (caches[dst] if caches and dst in caches
                    else "canonical")
            summary = evaluate_checkpoint(
                checkpoints[src], n_episodes=n_episodes, seed=seed,
                shape=dst, initial_states=init)
            raw[i, j] = summary.mean_return
    norm = np.full((n, n), np.nan)
    undefined = []
    for i in range(n):
        if raw[i, i] > 0.0:
            norm[i] = raw[i] / raw[i, i]
        else:
            undefined.append(shapes[i])
    return TransferResult(shapes=list(shapes), raw=raw, normalized=norm,
                          undefined_rows=undefined)


@dataclass
class GaitMetrics:
    """Aggregate gait diagnostics over an evaluation battery."""
    mean_cum_rotation: float
    mean_length: float
    drop_rate: float
    mean_contacts: float
    mean_contact_switches: float

    def to_dict(self) -> dict:
        return asdict(self)


def gait_metrics(path, n_episodes: int = 50, seed: int = 0,
                 initial_states=None) -> GaitMetrics:
    """Summarize how a checkpointed policy moves its fingers: rotation
    achieved, survival, contact count, and debounced contact switches (the
    signature separating gaiting from in-grasp twisting)."""
    summary = evaluate_checkpoint(path, n_episodes=n_episodes, seed=seed,
                                  initial_states=initial_states)
    return GaitMetrics(
        mean_cum_rotation=summary.mean_cum_rotation,
        mean_length=summary.mean_length,
        drop_rate=summary.drop_rate,
        mean_contacts=float(np.mean([e.mean_contacts
                                     for e in summary.episodes])),
        mean_contact_switches=summary.mean_contact_switches)


def ablation_suite(base_cfg: TrainConfig, run_root, masks: list | None = None,
                   seeds: tuple = (0, 1), n_eval_episodes: int = 50,
                   eval_seed: int = 0, log=None) -> dict:
    """Train and evaluate one policy per observation mask and seed.

    Existing finished runs under run_root are reused, so the suite is
    restartable. Returns {mask: {"per_seed": [...], "mean_return": float,
    "fraction_of_full": float}}.
    """
    masks = list(masks or OBS_MASKS)
    if len(set(masks)) != len(masks):
        dup = sorted({m for m in masks if masks.count(m) > 1})
        raise ValueError(f"duplicate mask(s) in ablation list: {dup}")
    unknown = sorted(set(masks) - set(OBS_MASKS))
    if unknown:
        raise ValueError(f"unknown mask(s): {unknown}")
    if "full" not in masks:
        masks = ["full"] + masks
    results = {}
    for mask in masks:
        per_seed = []
        for seed in seeds:
            cfg = replace(base_cfg, obs_mask=mask)
            run_dir = os.path.join(run_root, f"ablate_{mask}_s{seed}")
            final = os.path.join(run_dir, "checkpoint_final.pt")
            if not os.path.exists(final):
                trainer = Trainer(cfg, seed=seed, run_dir=run_dir)
                latest = trainer.checkpoint_path()
                if os.path.exists(latest):
                    trainer.load_checkpoint(latest)
                trainer.train(log=log)
            summary = evaluate_checkpoint(final, n_episodes=n_eval_episodes,
                                          seed=eval_seed)
            per_seed.append(summary.mean_return)
        results[mask] = {"per_seed": per_seed,
                         "mean_return": float(np.mean(per_seed))}
    full = results["full"]["mean_return"]
    for mask in results:
        results[mask]["fraction_of_full"] = (
            results[mask]["mean_return"] / full if full != 0.0
            else float("nan"))
    return results
