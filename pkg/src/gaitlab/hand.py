"""Four-finger hand model: geometry constants, forward kinematics, IK.

The hand is palm-down at the origin. Finger bases sit on a ring in the palm
plane at 90 degree spacing, so the hand is symmetric under quarter turns
about +z. Each finger has an abduction joint about its outward radial axis
followed by three flexion joints; at q = 0 a finger points straight down.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels


def _ring_frames(n_fingers: int, ring_radius: float):
    base = np.zeros((n_fingers, 3))
    ax_out = np.zeros((n_fingers, 3))
    ax_tan = np.zeros((n_fingers, 3))
    for f in range(n_fingers):
        th = 2.0 * np.pi * f / n_fingers
        c, s = np.cos(th), np.sin(th)
        base[f] = (ring_radius * c, ring_radius * s, 0.0)
        ax_out[f] = (c, s, 0.0)
        ax_tan[f] = (-s, c, 0.0)
    return base, ax_out, ax_tan


@dataclass
class HandModel:
    """Kinematic and actuation constants for the four-finger hand."""

    n_fingers: int = 4
    ring_radius: float = 0.050
    link_lengths: tuple = (0.050, 0.038, 0.028)
    fingertip_radius: float = 0.012
    link_radius: float = 0.009
    kp: float = 3.0
    kd: float = 0.06
    joint_inertia: float = 2.5e-4
    torque_limit: float = 0.8
    palm_radius: float = 0.055
    base_pos: np.ndarray = field(init=False)
    ax_out: np.ndarray = field(init=False)
    ax_tan: np.ndarray = field(init=False)
    q_lo: np.ndarray = field(init=False)
    q_hi: np.ndarray = field(init=False)

    def __post_init__(self):
        self.base_pos, self.ax_out, self.ax_tan = _ring_frames(
            self.n_fingers, self.ring_radius)
        lo = np.array([-0.85, -0.50, -0.30, -0.30])
        hi = np.array([0.85, 1.50, 1.60, 1.60])
        self.q_lo = np.tile(lo, self.n_fingers)
        self.q_hi = np.tile(hi, self.n_fingers)
        self.lengths = np.asarray(self.link_lengths, dtype=np.float64)

    @property
    def n_joints(self) -> int:
        return 4 * self.n_fingers

    def finger_points(self, q, f: int):
        """Joint chain points (base, knuckle2, knuckle3, tip center) of finger f."""
        pts = np.empty((4, 3))
        e_t = np.empty(3)
        kernels.fk_finger(np.ascontiguousarray(q[4 * f:4 * f + 4]),
                          self.base_pos[f], self.ax_out[f], self.ax_tan[f],
                          self.lengths, pts, e_t)
        return pts, e_t

    def fingertips(self, q) -> np.ndarray:
        """Fingertip centers, shape (n_fingers, 3)."""
        out = np.empty((self.n_fingers, 3))
        kernels.fingertip_positions(np.asarray(q, dtype=np.float64), self.base_pos,
                                    self.ax_out, self.ax_tan, self.lengths, out)
        return out

    def tip_jacobian(self, q, f: int) -> np.ndarray:
        """d(tip)/d(q_f), shape (3, 4)."""
        pts, e_t = self.finger_points(q, f)
        J = np.empty((4, 3))
        kernels.jac_point(pts, self.ax_out[f], e_t, pts[3], 3, J)
        return J.T

    def solve_fingertip_ik(self, targets, q_init=None, iters: int = 60,
                           damping: float = 1e-3, tol: float = 1e-5):
        """Damped-least-squares IK for all fingertip centers at once.

        targets: (n_fingers, 3) world positions. Fingers are independent so
        each 4-joint chain is solved on its own. Returns (q, err) where err
        is the worst per-finger residual in meters; joints are clamped to
        their limits every iteration and the best iterate is kept, so a
        non-reachable target still yields a usable posture.
        """
        targets = np.ascontiguousarray(targets, dtype=np.float64)
        q = np.array(q_init, dtype=np.float64) if q_init is not None \
            else self.rest_pose()
        worst = 0.0
        out_q = np.empty(4)
        for f in range(self.n_fingers):
            e = kernels.ik_finger(
                np.ascontiguousarray(q[4 * f:4 * f + 4]), self.base_pos[f],
                self.ax_out[f], self.ax_tan[f], self.lengths,
                self.q_lo[4 * f:4 * f + 4], self.q_hi[4 * f:4 * f + 4],
                targets[f], iters, damping, tol, out_q)
            q[4 * f:4 * f + 4] = out_q
            worst = max(worst, float(e))
        return q, worst

    def rest_pose(self) -> np.ndarray:
        """Claw posture: proximal link flexed outward, distal links curled in.

        Puts the fingertip ring at radius ~3.8 cm, 9.3 cm below the palm,
        which cages a 6 cm object below its equator at the object home
        position.
        """
        return np.tile(np.array([0.0, -0.5, 0.8, 0.8]), self.n_fingers)
