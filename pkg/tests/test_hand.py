"""Hand kinematics: FK chain geometry, Jacobian, IK, symmetry."""

import numpy as np
import pytest

from gaitlab.hand import HandModel
from gaitlab.geometry import quat_from_axis_angle, quat_rotate

HAND = HandModel()


def random_q(rng):
    return rng.uniform(HAND.q_lo, HAND.q_hi)


def test_zero_pose_points_straight_down():
    tips = HAND.fingertips(np.zeros(16))
    total = sum(HAND.link_lengths)
    for f in range(4):
        base = HAND.base_pos[f]
        want = base + np.array([0.0, 0.0, -total])
        assert np.max(np.abs(tips[f] - want)) < 1e-12


def test_chain_segment_lengths_invariant():
    rng = np.random.default_rng(0)
    for _ in range(20):
        q = random_q(rng)
        for f in range(4):
            pts, _ = HAND.finger_points(q, f)
            seg = np.diff(pts, axis=0)
            lens = np.linalg.norm(seg, axis=1)
            assert np.max(np.abs(lens - HAND.lengths)) < 1e-12


def test_abduction_rotates_about_radial_axis():
    """Moving only the abduction joint keeps the tip on a circle around the
    finger's outward axis through its base."""
    rng = np.random.default_rng(1)
    for f in range(4):
        q = np.tile(np.array([0.0, -0.4, 0.7, 0.6]), 4)
        base, axis = HAND.base_pos[f], HAND.ax_out[f]
        radii = []
        for ab in rng.uniform(-0.8, 0.8, 8):
            q[4 * f] = ab
            tip = HAND.fingertips(q)[f]
            rel = tip - base
            radii.append(np.linalg.norm(rel - np.dot(rel, axis) * axis))
            # axial coordinate is abduction-invariant
            assert np.dot(rel, axis) == pytest.approx(
                np.dot(HAND.fingertips(np.tile([0.0, -0.4, 0.7, 0.6], 4))[f]
                       - base, axis), abs=1e-12)
        assert np.ptp(radii) < 1e-12


def test_quarter_turn_symmetry():
    """Copying finger f's joints to finger f+1 rotates its tip by 90 degrees
    about +z."""
    rng = np.random.default_rng(2)
    qz = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), np.pi / 2)
    for _ in range(10):
        qf = rng.uniform(HAND.q_lo[:4], HAND.q_hi[:4])
        q = np.tile(qf, 4)
        tips = HAND.fingertips(q)
        for f in range(4):
            want = quat_rotate(qz, tips[f])
            assert np.max(np.abs(tips[(f + 1) % 4] - want)) < 1e-12


def test_tip_jacobian_matches_finite_differences():
    rng = np.random.default_rng(3)
    eps = 1e-7
    for _ in range(10):
        q = random_q(rng)
        # stay away from the limits so central differences are valid
        q = np.clip(q, HAND.q_lo + 2 * eps, HAND.q_hi - 2 * eps)
        for f in range(4):
            J = HAND.tip_jacobian(q, f)
            assert J.shape == (3, 4)
            for j in range(4):
                qp, qm = q.copy(), q.copy()
                qp[4 * f + j] += eps
                qm[4 * f + j] -= eps
                fd = (HAND.fingertips(qp)[f] - HAND.fingertips(qm)[f]) / (2 * eps)
                assert np.max(np.abs(J[:, j] - fd)) < 1e-6


def test_ik_reaches_reachable_targets():
    rng = np.random.default_rng(4)
    for _ in range(15):
        q_true = random_q(rng)
        # interior posture: targets generated from it are reachable
        q_true = 0.7 * q_true + 0.3 * HAND.rest_pose()
        targets = HAND.fingertips(q_true)
        q_ik, err = HAND.solve_fingertip_ik(targets)
        assert err < 1e-4
        got = HAND.fingertips(q_ik)
        assert np.max(np.linalg.norm(got - targets, axis=1)) < 1e-4


def test_ik_respects_joint_limits():
    rng = np.random.default_rng(5)
    # deliberately unreachable targets far outside the workspace
    targets = rng.uniform(-0.4, 0.4, (4, 3)) + np.array([0, 0, -0.3])
    q_ik, err = HAND.solve_fingertip_ik(targets)
    assert np.all(q_ik >= HAND.q_lo - 1e-12)
    assert np.all(q_ik <= HAND.q_hi + 1e-12)
    assert np.isfinite(err)


def test_rest_pose_cages_below_object_equator():
    q = HAND.rest_pose()
    tips = HAND.fingertips(q)
    # all four tips below the palm, on a ring tighter than the base ring
    assert np.all(tips[:, 2] < -0.05)
    radii = np.linalg.norm(tips[:, :2], axis=1)
    assert np.all(radii < HAND.ring_radius)
    assert np.ptp(radii) < 1e-9
