import sys, os, time, shutil
sys.path.insert(0, "/root/pkg/src")
import numpy as np
from gaitlab.ppo import TrainConfig, Trainer

CACHE = "/tmp/probe_sphere.grasps.jsonl"
STEPS = 2_000_000

CONFIGS = {
    # big batch, more epochs, longer horizon, entropy bonus
    "A": dict(n_envs=16, rollout_len=1024, minibatch=4096, epochs=10,
              gamma=0.995, ent_coef=0.005),
    # medium batch, conservative epochs
    "B": dict(n_envs=16, rollout_len=512, minibatch=2048, epochs=4,
              gamma=0.99, ent_coef=0.002),
    # baseline batch, only gamma+entropy changed
    "C": dict(n_envs=8, rollout_len=256, minibatch=512, epochs=4,
              gamma=0.995, ent_coef=0.005),
    # like A but gentler initial exploration noise
    "D": dict(n_envs=16, rollout_len=1024, minibatch=4096, epochs=10,
              gamma=0.995, ent_coef=0.005, log_std=-1.6),
}

for tag, kw in CONFIGS.items():
    log_std = kw.pop("log_std", None)
    cfg = TrainConfig(shape="sphere", total_steps=STEPS,
                      initial_state_source=CACHE, **kw)
    run_dir = f"/tmp/sweep_{tag}"
    shutil.rmtree(run_dir, ignore_errors=True)
    tr = Trainer(cfg, seed=1, run_dir=run_dir)
    if log_std is not None:
        with __import__("torch").no_grad():
            tr.policy.log_std.fill_(log_std)
    t0 = time.perf_counter()
    print(f"=== {tag} {kw} ===", flush=True)
    tr.train(log=lambda m: print(f"[{tag}] {m}", flush=True))
    print(f"=== {tag} done in {(time.perf_counter()-t0)/60:.1f} min ===",
          flush=True)
