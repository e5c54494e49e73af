"""PPO probe on the retuned scene (light object, grippy tips, gentle actions)."""
import sys, time, shutil

sys.path.insert(0, "/root/pkg/src")
from gaitlab.ppo import TrainConfig, Trainer
from gaitlab.evalsuite import evaluate_checkpoint

CACHE = "/tmp/probe_sphere2.grasps.jsonl"

cfg = TrainConfig(shape="sphere", total_steps=4_000_000, n_envs=16,
                  rollout_len=1024, minibatch=4096, epochs=10, gamma=0.99,
                  ent_coef=0.0, initial_state_source=CACHE)
run_dir = "/tmp/sweep_H"
shutil.rmtree(run_dir, ignore_errors=True)
tr = Trainer(cfg, seed=1, run_dir=run_dir)
t0 = time.perf_counter()
tr.train(log=lambda m: print(f"[H] {m}", flush=True))
print(f"=== H done in {(time.perf_counter() - t0) / 60:.1f} min ===", flush=True)

s = evaluate_checkpoint(f"{run_dir}/checkpoint_final.pt", n_episodes=10, seed=0,
                        initial_states=CACHE)
print(f"[H eval] ret {s.mean_return:.2f} rot {s.mean_cum_rotation:.2f} "
      f"len {s.mean_length:.0f} drop {s.drop_rate:.2f} "
      f"switches {s.mean_contact_switches:.1f}", flush=True)
