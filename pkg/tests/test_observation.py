"""Observation assembly: layout, masks, derived normals, noise stream."""

import numpy as np
import pytest

from gaitlab.envs import (assemble_observation, derive_contact_normal,
                          ObservationMask, NoiseSpec, OBS_DIM, OBS_LAYOUT,
                          OBS_MASKS, FULL_OBS, PROPRIO_ONLY,
                          JOINTS_AND_NORMALS)


def make_inputs(rng):
    q = rng.normal(0, 0.4, 16)
    q_des = rng.normal(0, 0.4, 16)
    tips = rng.normal(0, 0.05, (4, 3))
    reports = []
    for f in range(4):
        if f == 2:
            reports.append(None)
        else:
            pos = tips[f] + 0.012 * rng.normal(size=3)
            reports.append((True, pos, abs(rng.normal(1.5, 0.5))))
    return q, q_des, reports, tips


def test_layout_offsets():
    blocks = {name: (off, off + ln) for name, off, ln in OBS_LAYOUT}
    assert blocks["joint_pos"] == (0, 16)
    assert blocks["joint_target"] == (16, 32)
    assert blocks["contact_pos"] == (32, 44)
    assert blocks["contact_force"] == (44, 48)
    assert blocks["contact_normal"] == (48, 60)
    assert OBS_DIM == 60


def test_blocks_land_in_their_slots():
    rng = np.random.default_rng(0)
    q, q_des, reports, tips = make_inputs(rng)
    obs = assemble_observation(q, q_des, reports, tips, FULL_OBS)
    assert np.array_equal(obs[0:16], q)
    assert np.array_equal(obs[16:32], q_des)
    for f, rep in enumerate(reports):
        sl = obs[32 + 3 * f:35 + 3 * f]
        if rep is None:
            assert np.all(sl == 0.0)
            assert obs[44 + f] == 0.0
            assert np.all(obs[48 + 3 * f:51 + 3 * f] == 0.0)
        else:
            assert np.array_equal(sl, rep[1])
            assert obs[44 + f] == rep[2]


def test_normal_rederived_from_contact_and_tip():
    """The normal block must equal the unit ray from tip center to contact,
    to full precision."""
    rng = np.random.default_rng(1)
    q, q_des, reports, tips = make_inputs(rng)
    obs = assemble_observation(q, q_des, reports, tips, FULL_OBS)
    for f, rep in enumerate(reports):
        if rep is None:
            continue
        d = np.asarray(rep[1]) - tips[f]
        want = d / np.linalg.norm(d)
        got = obs[48 + 3 * f:51 + 3 * f]
        assert np.max(np.abs(got - want)) < 1e-6
        assert np.linalg.norm(got) == pytest.approx(1.0, abs=1e-9)


def test_degenerate_normal_is_zero():
    tip = np.array([0.01, 0.02, 0.03])
    assert np.all(derive_contact_normal(tip, tip) == 0.0)


def test_mask_dims():
    assert FULL_OBS.dim == 60
    assert PROPRIO_ONLY.dim == 32
    assert OBS_MASKS["no_joint_target"].dim == 44
    assert JOINTS_AND_NORMALS.dim == 28


def test_masked_layout_packs_enabled_blocks():
    lay = JOINTS_AND_NORMALS.layout()
    assert lay == (("joint_pos", 0, 16), ("contact_normal", 16, 12))
    lay = OBS_MASKS["no_joint_target"].layout()
    assert lay == (("joint_pos", 0, 16), ("contact_pos", 16, 12),
                   ("contact_force", 28, 4), ("contact_normal", 32, 12))


def test_all_disabled_mask_rejected():
    with pytest.raises(ValueError):
        ObservationMask(joint_pos=False, joint_target=False,
                        contact_pos=False, contact_force=False,
                        contact_normal=False)


def test_masks_omit_disabled_blocks():
    """A masked vector is the full vector with disabled blocks cut out, so
    its length is the sum of the enabled block sizes."""
    rng = np.random.default_rng(2)
    q, q_des, reports, tips = make_inputs(rng)
    full = assemble_observation(q, q_des, reports, tips, FULL_OBS)
    full_off = {name: off for name, off, _ in FULL_OBS.layout()}
    for name, mask in OBS_MASKS.items():
        ob = assemble_observation(q, q_des, reports, tips, mask)
        assert ob.shape == (mask.dim,), name
        for block, off, ln in mask.layout():
            fo = full_off[block]
            assert np.array_equal(ob[off:off + ln], full[fo:fo + ln]), (
                name, block)


def test_proprio_only_vector():
    rng = np.random.default_rng(12)
    q, q_des, reports, tips = make_inputs(rng)
    ob = assemble_observation(q, q_des, reports, tips, PROPRIO_ONLY)
    assert ob.shape == (32,)
    assert np.array_equal(ob[0:16], q)
    assert np.array_equal(ob[16:32], q_des)


def test_zero_sigma_noise_is_bit_identical():
    rng_in = np.random.default_rng(3)
    q, q_des, reports, tips = make_inputs(rng_in)
    clean = assemble_observation(q, q_des, reports, tips, FULL_OBS)
    noisy = assemble_observation(q, q_des, reports, tips, FULL_OBS,
                                 noise=NoiseSpec(), rng=np.random.default_rng(9))
    assert np.array_equal(clean, noisy)


def test_noise_stream_draws_fixed_count():
    """Exactly 32 standard normals per call, regardless of which fingers
    touch, so sweep points stay stream-aligned."""
    rng_in = np.random.default_rng(4)
    q, q_des, reports, tips = make_inputs(rng_in)
    for reps in (reports, [None] * 4):
        rng_a = np.random.default_rng(77)
        assemble_observation(q, q_des, reps, tips, FULL_OBS,
                             noise=NoiseSpec(joint_position_sd=0.01),
                             rng=rng_a)
        rng_b = np.random.default_rng(77)
        rng_b.standard_normal(32)
        assert rng_a.bit_generator.state == rng_b.bit_generator.state


def test_noise_statistics_match_spec():
    """Monte-Carlo oracle: empirical noise moments match the requested
    standard deviations."""
    rng_in = np.random.default_rng(5)
    q, q_des, reports, tips = make_inputs(rng_in)
    spec = NoiseSpec(joint_position_sd=0.02, contact_position_sd=0.004,
                     contact_force_frac=0.10)
    rng = np.random.default_rng(123)
    n = 4000
    dq, dpos, forces = [], [], []
    for _ in range(n):
        ob = assemble_observation(q, q_des, reports, tips, FULL_OBS,
                                  noise=spec, rng=rng)
        dq.append(ob[0:16] - q)
        dpos.append(ob[32:35] - np.asarray(reports[0][1]))
        forces.append(ob[44])
    dq = np.concatenate(dq)
    dpos = np.concatenate(dpos)
    forces = np.array(forces)
    assert np.std(dq) == pytest.approx(0.02, rel=0.05)
    assert abs(np.mean(dq)) < 3 * 0.02 / np.sqrt(dq.size)
    assert np.std(dpos) == pytest.approx(0.004, rel=0.05)
    f0 = reports[0][2]
    # multiplicative noise, clamped at zero from below
    assert np.std(forces) == pytest.approx(0.10 * f0, rel=0.06)
    assert np.min(forces) >= 0.0


def test_force_noise_never_negative():
    rng_in = np.random.default_rng(6)
    q, q_des, reports, tips = make_inputs(rng_in)
    spec = NoiseSpec(contact_force_frac=5.0)
    rng = np.random.default_rng(8)
    for _ in range(200):
        ob = assemble_observation(q, q_des, reports, tips, FULL_OBS,
                                  noise=spec, rng=rng)
        assert np.all(ob[44:48] >= 0.0)
