import sys, time, shutil, os
sys.path.insert(0, "/root/pkg/src")
import numpy as np
import torch
from gaitlab.ppo import TrainConfig, Trainer, gae_advantages, load_policy_bundle

# GAE oracle check first: O(T^2) direct sum of discounted deltas
rng = np.random.default_rng(0)
T, N = 40, 3
rew = rng.normal(size=(T, N))
val = rng.normal(size=(T, N))
done = (rng.random(size=(T, N)) < 0.15).astype(float)
last = rng.normal(size=N)
gamma, lam = 0.97, 0.9

adv_ref = np.zeros((T, N))
for n in range(N):
    for t in range(T):
        acc = 0.0
        coef = 1.0
        for k in range(t, T):
            v_next = last[n] if k == T - 1 else val[k + 1, n]
            delta = rew[k, n] + gamma * v_next * (1 - done[k, n]) - val[k, n]
            acc += coef * delta
            if done[k, n]:
                break
            coef *= gamma * lam
        adv_ref[t, n] = acc
adv, ret = gae_advantages(rew, val, done, last, gamma, lam)
print("GAE max err:", np.abs(adv - adv_ref).max())
assert np.abs(adv - adv_ref).max() < 1e-10

run_dir = "/tmp/smoke_run"
shutil.rmtree(run_dir, ignore_errors=True)
cfg = TrainConfig(shape="sphere", total_steps=4 * 2 * 64, n_envs=2,
                  rollout_len=64, minibatch=64, epochs=2, horizon=120)
t0 = time.perf_counter()
tr = Trainer(cfg, seed=11, run_dir=run_dir)
tr.train(log=print)
dt = time.perf_counter() - t0
print(f"train wall {dt:.1f}s  ({tr.global_step/dt:.0f} env-steps/s incl jit)")

# resume determinism: train 2 updates, checkpoint, then 2 more; vs 4 straight
def run(total, resume_from=None, seed=21, rd="/tmp/smoke_a"):
    cfg2 = TrainConfig(shape="sphere", total_steps=total, n_envs=2,
                       rollout_len=32, minibatch=32, epochs=2, horizon=80)
    tr2 = Trainer(cfg2, seed=seed, run_dir=rd)
    if resume_from:
        tr2.load_checkpoint(resume_from)
    tr2.train(log=None)
    return tr2

shutil.rmtree("/tmp/smoke_a", ignore_errors=True)
shutil.rmtree("/tmp/smoke_b", ignore_errors=True)
ta = run(4 * 64, rd="/tmp/smoke_a")                       # 4 updates straight
tb1 = run(2 * 64, rd="/tmp/smoke_b")                      # 2 updates
# second leg must ask for the full horizon but resume from the checkpoint
cfgb = TrainConfig(shape="sphere", total_steps=4 * 64, n_envs=2,
                   rollout_len=32, minibatch=32, epochs=2, horizon=80)
tb2 = Trainer(cfgb, seed=21, run_dir="/tmp/smoke_b")
# checkpoint config recorded total_steps=2*64; patch for comparison
import torch as _t
pay = _t.load(tb1.checkpoint_path("final"), weights_only=False)
pay["config"]["total_steps"] = 4 * 64
_t.save(pay, "/tmp/smoke_b/patched.pt")
tb2.load_checkpoint("/tmp/smoke_b/patched.pt")
tb2.train(log=None)

pa = dict(ta.policy.state_dict())
pb = dict(tb2.policy.state_dict())
worst = max(float((pa[k] - pb[k]).abs().max()) for k in pa)
print("resume weight max |diff|:", worst)
assert worst == 0.0, "resume is not bit-exact"
print("resume bit-exact OK")
