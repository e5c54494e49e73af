"""Proximal policy optimization with clipped surrogate objective.

Single-process, deterministic given the config seed: environment resets,
action sampling, and minibatch shuffling all derive from it, and checkpoints
carry enough state (networks, optimizer, normalizer, RNG, per-env episode
state) that a resumed run continues bit-for-bit.
"""

import csv
import os
import time
from dataclasses import dataclass, asdict

import numpy as np
import torch

from .envs import AxisSpec, NoiseSpec, ReorientEnv, SyncVecEnv, OBS_MASKS
from .policy import GaussianPolicy, ObsNormalizer, PolicyConfig, ValueNet
from .scene import SceneConfig
from .sgs import load_cache

TRAIN_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"const": "train"},
        "shape": {"type": "string"},
        "axis": {"enum": ["+z", "+x", "-z", "-x"]},
        "obs_mask": {"enum": sorted(OBS_MASKS)},
        "initial_state_source": {"type": "string"},
        "total_steps": {"type": "integer", "minimum": 1},
        "n_envs": {"type": "integer", "minimum": 1},
        "rollout_len": {"type": "integer", "minimum": 8},
        "minibatch": {"type": "integer", "minimum": 8},
        "epochs": {"type": "integer", "minimum": 1},
        "gamma": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "gae_lambda": {"type": "number", "minimum": 0, "maximum": 1},
        "clip": {"type": "number", "exclusiveMinimum": 0},
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "vf_coef": {"type": "number", "minimum": 0},
        "ent_coef": {"type": "number", "minimum": 0},
        "max_grad_norm": {"type": "number", "exclusiveMinimum": 0},
        "horizon": {"type": "integer", "minimum": 1},
        "checkpoint_every": {"type": "integer", "minimum": 0},
        "scene": {"type": "object"},
    },
    "required": ["shape"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class TrainConfig:
    shape: str = "sphere"
    axis: str = "+z"
    obs_mask: str = "full"
    # "canonical" or a grasp cache path
    initial_state_source: str = "canonical"
    total_steps: int = 1_000_000
    n_envs: int = 8
    rollout_len: int = 256
    minibatch: int = 512
    epochs: int = 4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    lr: float = 3e-4
    vf_coef: float = 0.5
    ent_coef: float = 0.0
    max_grad_norm: float = 0.5
    horizon: int = 500
    checkpoint_every: int = 0       # steps; 0 = only final
    scene_overrides: dict | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        ov = d.pop("scene_overrides")
        d["kind"] = "train"
        if ov:
            d["scene"] = ov
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d.pop("kind", None)
        ov = d.pop("scene", None)
        return cls(scene_overrides=ov, **d)


METRIC_FIELDS = ("step", "mean_return", "mean_len", "mean_cum_rotation",
                 "drop_rate", "policy_loss", "value_loss", "entropy",
                 "approx_kl", "clip_frac")


def gae_advantages(rewards, values, dones, last_values, gamma, lam):
    """Generalized advantage estimation over a (T, N) rollout.

    dones marks steps whose NEXT state starts a new episode (bootstrapping
    through them is disabled; truncation bootstrap must already be folded
    into the reward). Returns (advantages, returns), each (T, N).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    T, N = rewards.shape
    adv = np.zeros((T, N))
    last_gae = np.zeros(N)
    for t in range(T - 1, -1, -1):
        next_v = last_values if t == T - 1 else values[t + 1]
        not_done = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_v * not_done - values[t]
        last_gae = delta + gamma * lam * not_done * last_gae
        adv[t] = last_gae
    return adv, adv + values


def build_envs(cfg: TrainConfig, base_seed: int) -> SyncVecEnv:
    scene_kw = dict(cfg.scene_overrides or {})
    scene = SceneConfig(shape=cfg.shape, **scene_kw)
    initial_states = None
    if cfg.initial_state_source != "canonical":
        header, states, _ = load_cache(cfg.initial_state_source)
        if header["scene"]["shape"] != cfg.shape:
            raise ValueError(
                f"grasp cache {cfg.initial_state_source} was built for shape "
                f"{header['scene']['shape']!r}, not {cfg.shape!r}")
        # cached states are raw simulator snapshots; replaying them under
        # different physics would silently change the task
        cache_scene = {k: v for k, v in header["scene"].items() if k != "kind"}
        train_scene = {k: v for k, v in scene.to_dict().items() if k != "kind"}
        if cache_scene != train_scene:
            diff = sorted(k for k in train_scene
                          if cache_scene.get(k) != train_scene[k])
            raise ValueError(
                f"grasp cache {cfg.initial_state_source} scene does not match "
                f"the training scene (differs in: {', '.join(diff)}); rebuild "
                f"the cache for this scene")
        initial_states = states

    def make_env(i: int) -> ReorientEnv:
        return ReorientEnv(scene, axis=AxisSpec(cfg.axis),
                           mask=OBS_MASKS[cfg.obs_mask], noise=NoiseSpec(),
                           initial_states=initial_states, horizon=cfg.horizon)

    return SyncVecEnv(make_env, cfg.n_envs, base_seed)


class Trainer:
    """Owns networks, optimizer, envs, and the training loop."""

    def __init__(self, cfg: TrainConfig, seed: int, run_dir):
        torch.set_num_threads(1)
        self.cfg = cfg
        self.seed = int(seed)
        self.run_dir = run_dir
        os.makedirs(run_dir, exist_ok=True)
        self.vec = build_envs(cfg, base_seed=self.seed)
        # seed before network construction so initial weights are a pure
        # function of (config, seed)
        torch.manual_seed(self.seed)
        self.pol_cfg = PolicyConfig(obs_dim=self.vec.obs_dim, act_dim=16)
        self.policy = GaussianPolicy(self.pol_cfg).double()
        self.value = ValueNet(self.pol_cfg).double()
        self.optim = torch.optim.Adam(
            list(self.policy.parameters()) + list(self.value.parameters()),
            lr=cfg.lr)
        self.normalizer = ObsNormalizer(self.vec.obs_dim)
        self.global_step = 0
        self.update_idx = 0
        self._obs = None
        self._ep_stats = []
        self._ep_return = np.zeros(cfg.n_envs)

    # ---- checkpointing ------------------------------------------------
    def checkpoint_path(self, tag="latest"):
        return os.path.join(self.run_dir, f"checkpoint_{tag}.pt")

    def save_checkpoint(self, tag="latest"):
        payload = {
            "config": self.cfg.to_dict(),
            "seed": self.seed,
            "policy": self.policy.state_dict(),
            "value": self.value.state_dict(),
            "optim": self.optim.state_dict(),
            "normalizer": self.normalizer.state_dict(),
            "torch_rng": torch.get_rng_state(),
            "vec_state": self.vec.get_state(),
            "global_step": self.global_step,
            "update_idx": self.update_idx,
            "obs": self._obs,
            "ep_return": self._ep_return.copy(),
            "policy_cfg": asdict(self.pol_cfg),
        }
        path = self.checkpoint_path(tag)
        tmp = path + ".tmp"
        torch.save(payload, tmp)
        os.replace(tmp, path)
        return path

    def load_checkpoint(self, path):
        payload = torch.load(path, weights_only=False)
        if TrainConfig.from_dict(payload["config"]) != self.cfg:
            raise ValueError("checkpoint config does not match trainer config")
        self.policy.load_state_dict(payload["policy"])
        self.value.load_state_dict(payload["value"])
        self.optim.load_state_dict(payload["optim"])
        self.normalizer.load_state_dict(payload["normalizer"])
        torch.set_rng_state(payload["torch_rng"])
        self.vec.set_state(payload["vec_state"])
        self.global_step = int(payload["global_step"])
        self.update_idx = int(payload["update_idx"])
        self._obs = payload["obs"]
        self._ep_return = payload["ep_return"].copy()

    # ---- core loop ----------------------------------------------------
    def collect(self):
        """One rollout of (rollout_len, n_envs) transitions."""
        cfg = self.cfg
        T, N = cfg.rollout_len, cfg.n_envs
        obs_buf = np.zeros((T, N, self.vec.obs_dim))
        act_buf = np.zeros((T, N, 16))
        logp_buf = np.zeros((T, N))
        val_buf = np.zeros((T, N))
        rew_buf = np.zeros((T, N))
        done_buf = np.zeros((T, N))
        if self._obs is None:
            self._obs = self.vec.reset_all()
        obs = self._obs
        for t in range(T):
            self.normalizer.update(obs)
            norm = self.normalizer.normalize(obs)
            with torch.no_grad():
                tn = torch.from_numpy(norm)
                action, logp = self.policy.act(tn)
                val = self.value(tn)
            a = action.numpy()
            obs_buf[t] = norm
            act_buf[t] = a
            logp_buf[t] = logp.numpy()
            val_buf[t] = val.numpy()
            obs, rewards, terms, truncs, infos = self.vec.step(a)
            self._ep_return += rewards
            rew = rewards.copy()
            for i in range(N):
                info = infos[i]
                if truncs[i]:
                    # bootstrap through the horizon cutoff
                    fin = self.normalizer.normalize(info["final_obs"])
                    with torch.no_grad():
                        rew[i] += cfg.gamma * float(
                            self.value(torch.from_numpy(fin)))
                if terms[i] or truncs[i]:
                    self._ep_stats.append({
                        "len": info["final_t"],
                        "cum_rotation": info["final_cum_rotation"],
                        "dropped": info.get("termination") == "dropped",
                        "return": self._ep_return[i],
                    })
                    self._ep_return[i] = 0.0
            rew_buf[t] = rew
            done_buf[t] = (terms | truncs).astype(np.float64)
            self.global_step += N
        self._obs = obs
        with torch.no_grad():
            last_val = self.value(torch.from_numpy(
                self.normalizer.normalize(obs))).numpy()
        return obs_buf, act_buf, logp_buf, val_buf, rew_buf, done_buf, last_val

    def update(self, batch):
        cfg = self.cfg
        obs, act, logp_old, val, rew, done, last_val = batch
        adv, ret = gae_advantages(rew, val, done, last_val, cfg.gamma,
                                  cfg.gae_lambda)
        B = cfg.rollout_len * cfg.n_envs
        obs_t = torch.from_numpy(obs.reshape(B, -1))
        act_t = torch.from_numpy(act.reshape(B, -1))
        logp_t = torch.from_numpy(logp_old.reshape(B))
        adv_t = torch.from_numpy(adv.reshape(B))
        ret_t = torch.from_numpy(ret.reshape(B))
        adv_t = (adv_t - adv_t.mean()) / (adv_t.std() + 1e-8)
        gen = torch.Generator().manual_seed(self.seed * 1000003 + self.update_idx)
        stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
                 "approx_kl": 0.0, "clip_frac": 0.0}
        n_batches = 0
        for _ in range(cfg.epochs):
            perm = torch.randperm(B, generator=gen)
            for start in range(0, B, cfg.minibatch):
                idx = perm[start:start + cfg.minibatch]
                logp_new, entropy = self.policy.log_prob(obs_t[idx], act_t[idx])
                ratio = torch.exp(logp_new - logp_t[idx])
                a_mb = adv_t[idx]
                s1 = ratio * a_mb
                s2 = torch.clamp(ratio, 1 - cfg.clip, 1 + cfg.clip) * a_mb
                policy_loss = -torch.min(s1, s2).mean()
                v_pred = self.value(obs_t[idx])
                value_loss = ((v_pred - ret_t[idx]) ** 2).mean()
                ent = entropy.mean()
                loss = (policy_loss + cfg.vf_coef * value_loss
                        - cfg.ent_coef * ent)
                self.optim.zero_grad()
                loss.backward()
                torch.nn.utils.clip_grad_norm_(
                    list(self.policy.parameters()) + list(self.value.parameters()),
                    cfg.max_grad_norm)
                self.optim.step()
                with torch.no_grad():
                    stats["policy_loss"] += float(policy_loss)
                    stats["value_loss"] += float(value_loss)
                    stats["entropy"] += float(ent)
                    stats["approx_kl"] += float((logp_t[idx] - logp_new).mean())
                    stats["clip_frac"] += float(
                        ((ratio - 1.0).abs() > cfg.clip).double().mean())
                n_batches += 1
        self.update_idx += 1
        return {k: v / n_batches for k, v in stats.items()}

    def train(self, log=print):
        cfg = self.cfg
        metrics_path = os.path.join(self.run_dir, "metrics.csv")
        new_file = not os.path.exists(metrics_path)
        t0 = time.perf_counter()
        with open(metrics_path, "a", newline="") as fh:
            writer = csv.writer(fh)
            if new_file:
                writer.writerow(METRIC_FIELDS)
            while self.global_step < cfg.total_steps:
                batch = self.collect()
                stats = self.update(batch)
                eps = self._ep_stats
                self._ep_stats = []
                row = {
                    "step": self.global_step,
                    "mean_return": (float(np.mean([e["return"] for e in eps]))
                                    if eps else float("nan")),
                    "mean_len": (float(np.mean([e["len"] for e in eps]))
                                 if eps else float("nan")),
                    "mean_cum_rotation": (float(np.mean([e["cum_rotation"]
                                                         for e in eps]))
                                          if eps else float("nan")),
                    "drop_rate": (float(np.mean([e["dropped"] for e in eps]))
                                  if eps else float("nan")),
                    **stats,
                }
                writer.writerow([repr(row[k]) if isinstance(row[k], float)
                                 else row[k] for k in METRIC_FIELDS])
                fh.flush()
                if log is not None and self.update_idx % 10 == 0:
                    sps = self.global_step / (time.perf_counter() - t0)
                    log(f"step {row['step']} return/env "
                        f"{row['mean_return']:.2f} rot "
                        f"{row['mean_cum_rotation']:.2f} kl "
                        f"{row['approx_kl']:.4f} ({sps:.0f} sps)")
                if (cfg.checkpoint_every
                        and self.global_step % cfg.checkpoint_every < cfg.n_envs * cfg.rollout_len):
                    self.save_checkpoint(tag=str(self.global_step))
                    self.save_checkpoint()
        self.save_checkpoint(tag="final")
        self.save_checkpoint()
        return metrics_path


def load_policy_bundle(path):
    """Load a checkpoint for evaluation: returns (policy, value, normalizer,
    TrainConfig, payload)."""
    payload = torch.load(path, weights_only=False)
    pol_cfg = PolicyConfig(**payload["policy_cfg"])
    policy = GaussianPolicy(pol_cfg).double()
    policy.load_state_dict(payload["policy"])
    policy.eval()
    value = ValueNet(pol_cfg).double()
    value.load_state_dict(payload["value"])
    value.eval()
    norm = ObsNormalizer(pol_cfg.obs_dim)
    norm.load_state_dict(payload["normalizer"])
    norm.frozen = True
    cfg = TrainConfig.from_dict(payload["config"])
    return policy, value, norm, cfg, payload
