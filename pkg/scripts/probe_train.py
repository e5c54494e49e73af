import sys, os, time
sys.path.insert(0, "/root/pkg/src")
from gaitlab.scene import SceneConfig
from gaitlab.sgs import GraspSampleConfig, build_cache
from gaitlab.ppo import TrainConfig, Trainer

shape = sys.argv[1] if len(sys.argv) > 1 else "sphere"
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 2_000_000
seed = int(sys.argv[3]) if len(sys.argv) > 3 else 1
source = sys.argv[4] if len(sys.argv) > 4 else "cache"

cache = f"/tmp/probe_{shape}.grasps.jsonl"
if source == "cache" and not os.path.exists(cache):
    t0 = time.perf_counter()
    build_cache(cache, SceneConfig(shape=shape), count=1000, seed=777,
                cfg=GraspSampleConfig(), workers=1)
    print(f"cache built in {time.perf_counter()-t0:.0f}s", flush=True)

cfg = TrainConfig(shape=shape, total_steps=steps,
                  initial_state_source=cache if source == "cache" else "canonical")
run_dir = f"/tmp/probe_{shape}_{source}_s{seed}"
tr = Trainer(cfg, seed=seed, run_dir=run_dir)
tr.train(log=lambda m: print(m, flush=True))
print("done", run_dir, flush=True)
