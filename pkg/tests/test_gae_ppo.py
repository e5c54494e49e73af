"""Advantage estimation, surrogate gradient, normalizer, and resume tests.

The GAE recursion is checked against a direct O(T^2) discounted sum, the
clipped surrogate gradient against central finite differences on a small
double-precision policy, and training resume against an uninterrupted run.
"""

import numpy as np
import pytest
import torch
from torch.nn.utils import parameters_to_vector, vector_to_parameters

from gaitlab.policy import GaussianPolicy, ObsNormalizer, PolicyConfig, ValueNet
from gaitlab.ppo import TrainConfig, Trainer, gae_advantages


# ---- GAE ----------------------------------------------------------------

def gae_direct(rewards, values, dones, last_values, gamma, lam):
    """O(T^2) reference: explicit discounted sum of TD residuals, cut at
    episode boundaries."""
    T, N = rewards.shape
    adv = np.zeros((T, N))
    for n in range(N):
        for t in range(T):
            acc = 0.0
            discount = 1.0
            for step in range(t, T):
                next_v = last_values[n] if step == T - 1 else values[step + 1, n]
                nd = 1.0 - dones[step, n]
                delta = rewards[step, n] + gamma * next_v * nd - values[step, n]
                acc += discount * delta
                if dones[step, n]:
                    break
                discount *= gamma * lam
            adv[t, n] = acc
    return adv


def test_gae_matches_direct_sum():
    rng = np.random.default_rng(2024)
    T, N = 64, 4
    rewards = rng.normal(size=(T, N))
    values = rng.normal(size=(T, N))
    dones = (rng.random((T, N)) < 0.1).astype(np.float64)
    last_values = rng.normal(size=N)
    adv, ret = gae_advantages(rewards, values, dones, last_values, 0.99, 0.95)
    expected = gae_direct(rewards, values, dones, last_values, 0.99, 0.95)
    err = np.max(np.abs(adv - expected))
    assert err < 1e-6, f"GAE deviates from direct sum by {err}"
    assert err < 1e-12
    np.testing.assert_allclose(ret, adv + values, rtol=0, atol=0)


def test_gae_stops_at_episode_boundary():
    # a done step must not receive credit from anything after it
    T, N = 5, 1
    rewards = np.zeros((T, N))
    values = np.zeros((T, N))
    dones = np.zeros((T, N))
    dones[2, 0] = 1.0
    rewards[2, 0] = 1.0
    rewards[4, 0] = 100.0
    last_values = np.array([50.0])
    adv, _ = gae_advantages(rewards, values, dones, last_values, 0.9, 0.9)
    # at the boundary the advantage is just the immediate residual
    assert adv[2, 0] == pytest.approx(1.0)
    # upstream steps discount through it, nothing leaks across
    assert adv[1, 0] == pytest.approx(0.9 * 0.9 * 1.0)
    assert adv[0, 0] == pytest.approx((0.9 * 0.9) ** 2 * 1.0)


def test_gae_single_step_is_td_residual():
    rewards = np.array([[2.0]])
    values = np.array([[0.5]])
    dones = np.zeros((1, 1))
    last_values = np.array([3.0])
    adv, ret = gae_advantages(rewards, values, dones, last_values, 0.99, 0.95)
    assert adv[0, 0] == pytest.approx(2.0 + 0.99 * 3.0 - 0.5)
    assert ret[0, 0] == pytest.approx(adv[0, 0] + 0.5)


# ---- clipped surrogate gradient ------------------------------------------

def _surrogate_loss(policy, value, obs, act, logp_old, adv, ret, clip=0.2,
                    vf_coef=0.5, ent_coef=0.01):
    """Mirror of the training objective for one minibatch."""
    logp_new, entropy = policy.log_prob(obs, act)
    ratio = torch.exp(logp_new - logp_old)
    s1 = ratio * adv
    s2 = torch.clamp(ratio, 1 - clip, 1 + clip) * adv
    policy_loss = -torch.min(s1, s2).mean()
    value_loss = ((value(obs) - ret) ** 2).mean()
    return policy_loss + vf_coef * value_loss - ent_coef * entropy.mean()


def test_surrogate_gradient_matches_finite_difference():
    torch.manual_seed(11)
    cfg = PolicyConfig(obs_dim=6, act_dim=3, hidden=(8, 8))
    policy = GaussianPolicy(cfg).double()
    value = ValueNet(cfg).double()
    B = 16
    obs = torch.randn(B, 6, dtype=torch.float64)
    with torch.no_grad():
        act, logp = policy.act(obs)
        # shift the behavior log-probs so some ratios land in the clipped
        # region and some stay inside the trust band
        logp_old = logp + torch.linspace(-0.5, 0.5, B, dtype=torch.float64)
        ratio0 = torch.exp(logp - logp_old)
    # the loss is only piecewise smooth; keep every sample away from the
    # clip corners so the finite-difference stencil stays on one piece
    dist = torch.min(torch.abs(ratio0 - 0.8), torch.abs(ratio0 - 1.2))
    assert float(dist.min()) > 1e-3
    adv = torch.randn(B, dtype=torch.float64)
    ret = torch.randn(B, dtype=torch.float64)

    params = list(policy.parameters()) + list(value.parameters())
    theta0 = parameters_to_vector(params).detach().clone()

    for p in params:
        if p.grad is not None:
            p.grad = None
    loss = _surrogate_loss(policy, value, obs, act, logp_old, adv, ret)
    loss.backward()
    grad_auto = torch.cat([p.grad.reshape(-1) for p in params]).clone()

    def loss_at(theta):
        with torch.no_grad():
            vector_to_parameters(theta, params)
            return float(_surrogate_loss(policy, value, obs, act, logp_old,
                                         adv, ret))

    h = 1e-6
    grad_fd = torch.zeros_like(theta0)
    for i in range(theta0.numel()):
        step = torch.zeros_like(theta0)
        step[i] = h
        grad_fd[i] = (loss_at(theta0 + step) - loss_at(theta0 - step)) / (2 * h)
    with torch.no_grad():
        vector_to_parameters(theta0, params)

    err = float(torch.max(torch.abs(grad_auto - grad_fd)))
    assert err < 1e-4, f"surrogate gradient off by {err} vs finite differences"
    assert err < 1e-7


def test_policy_log_prob_matches_gaussian_formula():
    torch.manual_seed(3)
    cfg = PolicyConfig(obs_dim=5, act_dim=4, hidden=(8,))
    policy = GaussianPolicy(cfg).double()
    obs = torch.randn(7, 5, dtype=torch.float64)
    act = torch.randn(7, 4, dtype=torch.float64)
    logp, entropy = policy.log_prob(obs, act)
    with torch.no_grad():
        mu = policy.mu(obs)
        std = torch.exp(policy.log_std)
    z = (act - mu) / std
    expected = (-0.5 * z ** 2 - torch.log(std)
                - 0.5 * np.log(2 * np.pi)).sum(-1)
    np.testing.assert_allclose(logp.detach(), expected.detach(), atol=1e-12)
    ent_expected = float((torch.log(std) + 0.5 * np.log(2 * np.pi * np.e)).sum())
    np.testing.assert_allclose(entropy.detach(), ent_expected, atol=1e-12)


def test_deterministic_action_is_mean():
    torch.manual_seed(4)
    policy = GaussianPolicy(PolicyConfig(obs_dim=5, act_dim=4, hidden=(8,))).double()
    obs = torch.randn(3, 5, dtype=torch.float64)
    act, _ = policy.act(obs, deterministic=True)
    np.testing.assert_array_equal(act.detach().numpy(),
                                  policy.mu(obs).detach().numpy())


# ---- observation normalizer ----------------------------------------------

def test_normalizer_matches_full_batch_statistics():
    rng = np.random.default_rng(5)
    norm = ObsNormalizer(6)
    chunks = [rng.normal(loc=2.0, scale=3.0, size=(n, 6))
              for n in (1, 7, 32, 3, 128)]
    for c in chunks:
        norm.update(c)
    all_data = np.concatenate(chunks, axis=0)
    np.testing.assert_allclose(norm.mean, all_data.mean(axis=0), rtol=1e-10)
    np.testing.assert_allclose(norm.var, all_data.var(axis=0), rtol=1e-10)
    assert norm.count == all_data.shape[0]
    z = norm.normalize(all_data)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-8)


def test_normalizer_update_order_invariant_to_chunking():
    rng = np.random.default_rng(6)
    data = rng.normal(size=(50, 4))
    a = ObsNormalizer(4)
    a.update(data)
    b = ObsNormalizer(4)
    for row in data:
        b.update(row[None])
    np.testing.assert_allclose(a.mean, b.mean, rtol=1e-12)
    np.testing.assert_allclose(a.var, b.var, rtol=1e-10)


def test_normalizer_clip_and_freeze():
    norm = ObsNormalizer(2, clip=5.0)
    norm.update(np.array([[0.0, 0.0], [2.0, 2.0]]))
    frozen_mean = norm.mean.copy()
    norm.frozen = True
    norm.update(np.full((10, 2), 100.0))
    np.testing.assert_array_equal(norm.mean, frozen_mean)
    z = norm.normalize(np.array([1e9, -1e9]))
    np.testing.assert_array_equal(z, [5.0, -5.0])


def test_normalizer_state_roundtrip():
    rng = np.random.default_rng(7)
    a = ObsNormalizer(3)
    a.update(rng.normal(size=(20, 3)))
    b = ObsNormalizer(3)
    b.load_state_dict(a.state_dict())
    x = rng.normal(size=(4, 3))
    np.testing.assert_array_equal(a.normalize(x), b.normalize(x))
    assert b.count == a.count


# ---- config round trip -----------------------------------------------------

def test_train_config_roundtrip():
    cfg = TrainConfig(shape="cylinder", axis="+x", obs_mask="proprio_only",
                      total_steps=1234, n_envs=3,
                      scene_overrides={"friction": 0.9})
    again = TrainConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert TrainConfig.from_dict(TrainConfig().to_dict()) == TrainConfig()


# ---- resume determinism ----------------------------------------------------

SMALL = dict(shape="sphere", total_steps=128, n_envs=2, rollout_len=32,
             minibatch=64, epochs=2, horizon=40,
             initial_state_source="canonical")


def _param_vector(trainer) -> np.ndarray:
    params = list(trainer.policy.parameters()) + list(trainer.value.parameters())
    return parameters_to_vector(params).detach().numpy().copy()


@pytest.mark.slow
def test_resume_reproduces_uninterrupted_run(tmp_path):
    cfg = TrainConfig(**SMALL)

    straight = Trainer(cfg, seed=7, run_dir=str(tmp_path / "straight"))
    for _ in range(2):
        straight.update(straight.collect())

    part1 = Trainer(cfg, seed=7, run_dir=str(tmp_path / "resumed"))
    part1.update(part1.collect())
    ckpt = part1.save_checkpoint()

    part2 = Trainer(cfg, seed=7, run_dir=str(tmp_path / "resumed2"))
    part2.load_checkpoint(ckpt)
    assert part2.global_step == 64
    part2.update(part2.collect())

    assert straight.global_step == part2.global_step == 128
    np.testing.assert_array_equal(_param_vector(straight), _param_vector(part2))
    np.testing.assert_array_equal(straight.normalizer.mean,
                                  part2.normalizer.mean)
    np.testing.assert_array_equal(straight.normalizer.var, part2.normalizer.var)
    # the restored env state must continue identically too; both trainers
    # share the process-global torch stream, so replay it for the second one
    rng = torch.get_rng_state()
    obs_a = straight.collect()[0]
    torch.set_rng_state(rng)
    obs_b = part2.collect()[0]
    np.testing.assert_array_equal(obs_a, obs_b)


def test_checkpoint_rejects_config_mismatch(tmp_path):
    cfg = TrainConfig(**SMALL)
    tr = Trainer(cfg, seed=1, run_dir=str(tmp_path / "a"))
    tr.collect()
    path = tr.save_checkpoint()
    other = TrainConfig(**{**SMALL, "total_steps": 256})
    tr2 = Trainer(other, seed=1, run_dir=str(tmp_path / "b"))
    with pytest.raises(ValueError, match="config"):
        tr2.load_checkpoint(path)
