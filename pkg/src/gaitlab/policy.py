"""Gaussian policy, value function, and running observation normalizer."""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

LOG_STD_INIT = -1.0
LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0


@dataclass(frozen=True)
class PolicyConfig:
    obs_dim: int = 60
    act_dim: int = 16
    hidden: tuple = (128, 128)
    log_std_init: float = LOG_STD_INIT


class ObsNormalizer:
    """Running mean/variance normalization with clipping.

    Uses Chan's parallel update so batch updates match the sequential ones.
    Frozen normalizers (evaluation, loaded snapshots) stop updating but keep
    normalizing.
    """

    def __init__(self, dim: int, clip: float = 10.0, eps: float = 1e-8):
        self.dim = dim
        self.clip = clip
        self.eps = eps
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 0.0
        self.frozen = False

    def update(self, batch: np.ndarray):
        if self.frozen:
            return
        batch = np.atleast_2d(batch)
        n = batch.shape[0]
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        if self.count == 0.0:
            self.mean = b_mean.copy()
            self.var = b_var.copy()
            self.count = float(n)
            return
        tot = self.count + n
        delta = b_mean - self.mean
        self.mean = self.mean + delta * (n / tot)
        m_a = self.var * self.count
        m_b = b_var * n
        self.var = (m_a + m_b + delta ** 2 * (self.count * n / tot)) / tot
        self.count = tot

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        z = (obs - self.mean) / np.sqrt(self.var + self.eps)
        return np.clip(z, -self.clip, self.clip)

    def state_dict(self) -> dict:
        return {"mean": self.mean.copy(), "var": self.var.copy(),
                "count": self.count, "frozen": self.frozen}

    def load_state_dict(self, d: dict):
        self.mean = np.asarray(d["mean"], dtype=np.float64).copy()
        self.var = np.asarray(d["var"], dtype=np.float64).copy()
        self.count = float(d["count"])
        self.frozen = bool(d["frozen"])


def _mlp(in_dim: int, hidden, out_dim: int) -> nn.Sequential:
    layers = []
    last = in_dim
    for h in hidden:
        layers += [nn.Linear(last, h), nn.Tanh()]
        last = h
    layers.append(nn.Linear(last, out_dim))
    return nn.Sequential(*layers)


class GaussianPolicy(nn.Module):
    """Diagonal Gaussian over set-point changes, state-independent std."""

    def __init__(self, cfg: PolicyConfig = PolicyConfig()):
        super().__init__()
        self.cfg = cfg
        self.mu = _mlp(cfg.obs_dim, cfg.hidden, cfg.act_dim)
        self.log_std = nn.Parameter(torch.full((cfg.act_dim,), cfg.log_std_init))
        # near-zero final layer keeps early actions small
        last = self.mu[-1]
        nn.init.orthogonal_(last.weight, gain=0.01)
        nn.init.zeros_(last.bias)

    def distribution(self, obs: torch.Tensor) -> torch.distributions.Normal:
        mean = self.mu(obs)
        log_std = torch.clamp(self.log_std, LOG_STD_MIN, LOG_STD_MAX)
        return torch.distributions.Normal(mean, torch.exp(log_std))

    def act(self, obs: torch.Tensor, deterministic: bool = False):
        """Sample (or take the mean) action with its log-probability."""
        dist = self.distribution(obs)
        action = dist.mean if deterministic else dist.sample()
        logp = dist.log_prob(action).sum(-1)
        return action, logp

    def log_prob(self, obs: torch.Tensor, action: torch.Tensor):
        dist = self.distribution(obs)
        return dist.log_prob(action).sum(-1), dist.entropy().sum(-1)


class ValueNet(nn.Module):
    def __init__(self, cfg: PolicyConfig = PolicyConfig()):
        super().__init__()
        self.v = _mlp(cfg.obs_dim, cfg.hidden, 1)

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        return self.v(obs).squeeze(-1)
