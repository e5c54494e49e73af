import sys, time, shutil
sys.path.insert(0, "/root/pkg/src")
import torch
from gaitlab.ppo import TrainConfig, Trainer

CACHE = "/tmp/probe_sphere.grasps.jsonl"

CONFIGS = {
    # gentle actions, big batch, no entropy bonus: let sigma shrink to hold
    "E": dict(kw=dict(n_envs=16, rollout_len=1024, minibatch=4096, epochs=10,
                      gamma=0.99, ent_coef=0.0,
                      scene_overrides={"action_limit": 0.02}),
              steps=3_000_000),
    # same but tiny entropy floor and longer credit horizon
    "F": dict(kw=dict(n_envs=16, rollout_len=1024, minibatch=4096, epochs=10,
                      gamma=0.995, ent_coef=0.001,
                      scene_overrides={"action_limit": 0.02}),
              steps=3_000_000),
}

for tag, spec in CONFIGS.items():
    cfg = TrainConfig(shape="sphere", total_steps=spec["steps"],
                      initial_state_source=CACHE, **spec["kw"])
    run_dir = f"/tmp/sweep_{tag}"
    shutil.rmtree(run_dir, ignore_errors=True)
    tr = Trainer(cfg, seed=1, run_dir=run_dir)
    t0 = time.perf_counter()
    print(f"=== {tag} ===", flush=True)
    tr.train(log=lambda m: print(f"[{tag}] {m}", flush=True))
    print(f"=== {tag} done in {(time.perf_counter()-t0)/60:.1f} min ===",
          flush=True)
