"""Open-loop wave-gait feasibility probe.

Drives the four fingers with phase-staggered abduction sweeps (engaged while
stroking forward, lifted while returning) and reports the cumulative object
rotation about +z. If a blind script can sustain rotation, the physics is
learnable; if not, the scene needs retuning before any more PPO probes.
"""
import sys

sys.path.insert(0, "/root/pkg/src")
import numpy as np

from gaitlab.envs import ReorientEnv
from gaitlab.scene import SceneConfig


def run_gait(env, steps=500, period=80, amp=0.5, lift=0.25, squeeze=0.06,
             phase_frac=0.25):
    obs, info = env.reset(seed=0)
    q_grasp = env.sim.q_des.copy()
    alim = env.sim.scene.config.action_limit
    rot = 0.0
    contacts = []
    for t in range(steps):
        q_tgt = q_grasp.copy()
        for f in range(4):
            ph = 2.0 * np.pi * (t / period + f * phase_frac)
            q_tgt[4 * f + 0] = q_grasp[4 * f + 0] + amp * np.sin(ph)
            # lift the distal joints while the abduction swings back
            returning = max(0.0, -np.cos(ph))
            engaged = max(0.0, np.cos(ph))
            for j in (2, 3):
                q_tgt[4 * f + j] = (q_grasp[4 * f + j]
                                    - lift * returning + squeeze * engaged)
        a = np.clip((q_tgt - env.sim.q_des) / alim, -1.0, 1.0)
        obs, r, term, trunc, info = env.step(a)
        rot = info["cum_rotation"]
        contacts.append(info["n_contacts"])
        if term:
            return rot, t + 1, np.mean(contacts), info["termination"]
    return rot, steps, np.mean(contacts), "horizon"


def main():
    for mass, mu, alim in ((0.060, 0.9, 0.05), (0.030, 1.2, 0.05),
                           (0.030, 1.2, 0.02)):
        cfg = SceneConfig(shape="sphere", object_mass=mass, friction=mu,
                          action_limit=alim)
        print(f"scene mass={mass} mu={mu} alim={alim}")
        for period in (60, 100, 160):
            for amp in (0.35, 0.6):
                for lift in (0.15, 0.3):
                    env = ReorientEnv(cfg, axis="+z")
                    rot, steps, nc, term = run_gait(env, period=period,
                                                    amp=amp, lift=lift)
                    rate = rot / (steps * 0.05)
                    print(f"  T={period:3d} A={amp:.2f} lift={lift:.2f} "
                          f"-> rot {rot:+6.2f} rad in {steps:3d} steps "
                          f"({rate:+.3f} rad/s) nc {nc:.2f} {term}")


if __name__ == "__main__":
    main()
