import sys
sys.path.insert(0, "/root/pkg/src")
import numpy as np
from gaitlab.scene import SceneConfig
from gaitlab.envs import ReorientEnv
from gaitlab.sgs import load_cache

hdr, states, _ = load_cache("/tmp/probe_sphere.grasps.jsonl")

def survival(action_limit, policy_std, n=25):
    env = ReorientEnv(SceneConfig(shape="sphere", action_limit=action_limit),
                      initial_states=states)
    lens, rets = [], []
    rng = np.random.default_rng(5)
    for k in range(n):
        env.reset(seed=int(rng.integers(1 << 31)))
        t, ret = 0, 0.0
        while t < 500:
            a = rng.normal(0, policy_std, 16)
            _, r, term, trunc, info = env.step(a)
            ret += r
            t += 1
            if term or trunc:
                break
        lens.append(t)
        rets.append(ret)
    return np.mean(lens), np.median(lens), np.mean(rets)

for lim in (0.05, 0.03, 0.02, 0.015, 0.01):
    m, med, ret = survival(lim, 0.37)
    print(f"limit {lim:5.3f} std 0.37: mean len {m:6.1f} med {med:6.1f} "
          f"mean return {ret:7.2f}")
