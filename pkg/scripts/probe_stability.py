import sys
sys.path.insert(0, "/root/pkg/src")
import numpy as np
from gaitlab.scene import SceneConfig
from gaitlab.envs import ReorientEnv, NoiseSpec
from gaitlab.sgs import load_cache

hdr, states, _ = load_cache("/tmp/probe_sphere.grasps.jsonl")
env = ReorientEnv(SceneConfig(shape="sphere"), initial_states=states)

def survival(policy_std, n=20):
    lens, rots = [], []
    rng = np.random.default_rng(5)
    for k in range(n):
        env.reset(seed=int(rng.integers(1 << 31)))
        t = 0
        while t < 500:
            a = (np.zeros(16) if policy_std == 0
                 else rng.normal(0, policy_std, 16))
            _, r, term, trunc, info = env.step(a)
            t += 1
            if term or trunc:
                break
        lens.append(t)
        rots.append(env.cum_rotation)
    return np.mean(lens), np.median(lens), np.mean(rots)

for std in (0.0, 0.1, 0.2, 0.37):
    m, med, rot = survival(std)
    print(f"std {std:4.2f}: mean len {m:6.1f}  median {med:6.1f}  rot {rot:5.2f}")
