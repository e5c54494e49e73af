import sys, time
sys.path.insert(0, "/root/pkg/src")
from gaitlab.ppo import TrainConfig, Trainer
import shutil

shutil.rmtree("/tmp/tp_run", ignore_errors=True)
cfg = TrainConfig(shape="sphere", total_steps=8 * 256 * 6, n_envs=8,
                  rollout_len=256, minibatch=512, epochs=4)
tr = Trainer(cfg, seed=3, run_dir="/tmp/tp_run")
# warm one update (jit compile)
b = tr.collect(); tr.update(b)
t0 = time.perf_counter()
for _ in range(4):
    b = tr.collect()
    tr.update(b)
dt = time.perf_counter() - t0
steps = 4 * 8 * 256
print(f"warm: {steps/dt:.0f} env-steps/s  ({dt/4:.2f}s per 2048-step update)")
print(f"1M steps ≈ {1e6/(steps/dt)/60:.1f} min")
