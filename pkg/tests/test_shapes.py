"""Quaternion algebra and object shape oracles."""

import numpy as np
import pytest

from gaitlab.geometry import (ObjectShape, SHAPE_NAMES, polyhedron_volume_inertia,
                              quat_conj, quat_from_axis_angle, quat_from_matrix,
                              quat_mul, quat_normalize, quat_rotate,
                              quat_to_matrix, random_quat)

RNG = np.random.default_rng(20240803)


def random_unit(rng, n=3):
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


# ---- quaternions ------------------------------------------------------


def test_quat_mul_matches_matrix_composition():
    for _ in range(50):
        a, b = random_quat(RNG), random_quat(RNG)
        left = quat_to_matrix(quat_mul(a, b))
        right = quat_to_matrix(a) @ quat_to_matrix(b)
        assert np.max(np.abs(left - right)) < 1e-12


def test_quat_rotate_matches_matrix():
    for _ in range(50):
        q = random_quat(RNG)
        v = RNG.standard_normal(3)
        assert np.max(np.abs(quat_rotate(q, v) - quat_to_matrix(q) @ v)) < 1e-12


def test_quat_conj_is_inverse():
    for _ in range(20):
        q = random_quat(RNG)
        e = quat_mul(q, quat_conj(q))
        assert np.max(np.abs(e - np.array([1.0, 0, 0, 0]))) < 1e-12


def test_axis_angle_round_trip():
    for _ in range(30):
        axis = random_unit(RNG)
        ang = RNG.uniform(-np.pi + 1e-3, np.pi - 1e-3)
        q = quat_from_axis_angle(axis, ang)
        # rotate the axis: must be invariant
        assert np.max(np.abs(quat_rotate(q, axis) - axis)) < 1e-12
        # rotation angle recovered from the trace
        tr = np.trace(quat_to_matrix(q))
        assert np.arccos(np.clip((tr - 1) / 2, -1, 1)) == pytest.approx(
            abs(ang), abs=1e-9)


def test_quat_from_matrix_round_trip():
    for _ in range(50):
        q = random_quat(RNG)
        q2 = quat_from_matrix(quat_to_matrix(q))
        # sign ambiguity: q and -q encode the same rotation
        if np.dot(q, q2) < 0:
            q2 = -q2
        assert np.max(np.abs(q - q2)) < 1e-9


def test_quat_normalize_and_random_unit():
    q = quat_normalize([2.0, 0.0, 0.0, 0.0])
    assert np.array_equal(q, [1.0, 0.0, 0.0, 0.0])
    for _ in range(20):
        assert np.linalg.norm(random_quat(RNG)) == pytest.approx(1.0, abs=1e-12)


# ---- shape catalogue ---------------------------------------------------


def test_all_shapes_construct_with_diagonal_inertia():
    for name in SHAPE_NAMES:
        s = ObjectShape(name, 0.03, 0.03)
        assert s.inertia_body.shape == (3,)
        assert np.all(s.inertia_body > 0)


def test_unknown_shape_rejected():
    with pytest.raises(ValueError):
        ObjectShape("torus", 0.03, 0.03)


def test_sphere_cylinder_inertia_analytic():
    m, r = 0.05, 0.04
    s = ObjectShape("sphere", r, m)
    assert np.max(np.abs(s.inertia_body - 0.4 * m * r * r)) < 1e-15
    c = ObjectShape("cylinder", r, m)
    radius, half_h = c.params
    assert radius == pytest.approx(0.8 * r)
    assert half_h == pytest.approx(0.6 * r)
    ixx = m * (3 * radius ** 2 + 4 * half_h ** 2) / 12
    izz = 0.5 * m * radius ** 2
    assert c.inertia_body[0] == pytest.approx(ixx, rel=1e-12)
    assert c.inertia_body[1] == pytest.approx(ixx, rel=1e-12)
    assert c.inertia_body[2] == pytest.approx(izz, rel=1e-12)


def test_cube_inertia_analytic():
    # solid cube, edge L: I = m L^2 / 6 about any center axis
    m, r = 0.08, 0.05
    cube = ObjectShape("cube", r, m)
    a = r / np.sqrt(3.0)
    want = m * (2 * a) ** 2 / 6.0
    assert np.max(np.abs(cube.inertia_body - want)) < 1e-12 * want + 1e-15


def test_polyhedron_volume_closed_forms():
    """Mesh volume integration vs textbook volumes for the regular solids."""
    r = 0.037
    ico = ObjectShape("icosahedron", r, 1.0)
    edge = 4.0 * r / np.sqrt(10.0 + 2.0 * np.sqrt(5.0))
    vol_want = 5.0 / 12.0 * (3.0 + np.sqrt(5.0)) * edge ** 3
    vol, _, com = polyhedron_volume_inertia(ico.verts, ico.tris, 1.0)
    assert vol == pytest.approx(vol_want, rel=1e-9)
    assert np.max(np.abs(com)) < 1e-12

    dod = ObjectShape("dodecahedron", r, 1.0)
    edge = 4.0 * r / (np.sqrt(3.0) * (1.0 + np.sqrt(5.0)))
    vol_want = 0.25 * (15.0 + 7.0 * np.sqrt(5.0)) * edge ** 3
    vol, _, com = polyhedron_volume_inertia(dod.verts, dod.tris, 1.0)
    assert vol == pytest.approx(vol_want, rel=1e-9)
    assert np.max(np.abs(com)) < 1e-12


def test_polyhedron_inertia_monte_carlo():
    """Independent inertia oracle: rejection-sample the solid and average."""
    rng = np.random.default_rng(4)
    for name in ("icosahedron", "dodecahedron"):
        s = ObjectShape(name, 0.05, 0.12)
        pts = rng.uniform(-0.05, 0.05, size=(400_000, 3))
        inside = np.all(pts @ s.planes[:, :3].T <= s.planes[:, 3], axis=1)
        pts = pts[inside]
        r2 = np.sum(pts * pts, axis=1)
        # diagonal inertia: I_xx = (m/N) sum(y^2 + z^2), etc.
        est = s.mass * np.array([np.mean(r2 - pts[:, 0] ** 2),
                                 np.mean(r2 - pts[:, 1] ** 2),
                                 np.mean(r2 - pts[:, 2] ** 2)])
        assert np.max(np.abs(est - s.inertia_body) / s.inertia_body) < 0.02, name


def test_mesh_planes_bound_vertices():
    for name in ("icosahedron", "dodecahedron", "cube"):
        s = ObjectShape(name, 0.04, 0.03)
        d = s.verts @ s.planes[:, :3].T - s.planes[:, 3]
        assert np.max(d) < 1e-9, name
        # every face plane is supported by at least three vertices
        support = np.sum(np.abs(d) < 1e-7, axis=0)
        assert np.min(support) >= 3, name


def test_vertex_counts_and_circumradius():
    ico = ObjectShape("icosahedron", 0.03, 0.01)
    dod = ObjectShape("dodecahedron", 0.03, 0.01)
    cube = ObjectShape("cube", 0.03, 0.01)
    assert len(ico.verts) == 12 and len(ico.planes) == 20
    assert len(dod.verts) == 20 and len(dod.planes) == 12
    assert len(cube.verts) == 8 and len(cube.planes) == 6
    for s in (ico, dod, cube):
        radii = np.linalg.norm(s.verts, axis=1)
        assert np.max(np.abs(radii - s.circumradius)) < 1e-12


def test_support_along_lands_on_boundary():
    """The ray exit point must lie on the hull: inside all planes, on one."""
    rng = np.random.default_rng(9)
    for name in ("icosahedron", "dodecahedron", "cube"):
        s = ObjectShape(name, 0.045, 0.02)
        for _ in range(200):
            d = random_unit(rng)
            t = s.support_along(d)
            p = t * d
            margins = s.planes[:, :3] @ p - s.planes[:, 3]
            assert np.max(margins) < 1e-9, name
            assert np.max(margins) > -1e-7, name


def test_support_along_analytic_shapes():
    rng = np.random.default_rng(10)
    sph = ObjectShape("sphere", 0.031, 0.02)
    cyl = ObjectShape("cylinder", 0.05, 0.02)
    radius, half_h = cyl.params
    for _ in range(100):
        d = random_unit(rng)
        assert sph.support_along(d) == pytest.approx(0.031, abs=1e-12)
        t = cyl.support_along(d)
        p = t * d
        rho = np.hypot(p[0], p[1])
        on_wall = abs(rho - radius) < 1e-9 and abs(p[2]) <= half_h + 1e-9
        on_cap = abs(abs(p[2]) - half_h) < 1e-9 and rho <= radius + 1e-9
        assert on_wall or on_cap


def test_support_z_matches_rotated_vertices():
    rng = np.random.default_rng(11)
    for name in ("icosahedron", "dodecahedron", "cube"):
        s = ObjectShape(name, 0.04, 0.02)
        for _ in range(25):
            pos = rng.normal(0, 0.05, 3)
            quat = random_quat(rng)
            want = max(quat_rotate(quat, v)[2] for v in s.verts) + pos[2]
            assert s.support_z(pos, quat) == pytest.approx(want, abs=1e-12)


def test_support_z_cylinder_parametric_oracle():
    rng = np.random.default_rng(12)
    cyl = ObjectShape("cylinder", 0.05, 0.02)
    radius, half_h = cyl.params
    th = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    ring = np.stack([radius * np.cos(th), radius * np.sin(th),
                     np.zeros_like(th)], axis=1)
    boundary = np.concatenate([ring + [0, 0, half_h], ring + [0, 0, -half_h]])
    for _ in range(25):
        pos = rng.normal(0, 0.03, 3)
        quat = random_quat(rng)
        R = quat_to_matrix(quat)
        want = (boundary @ R.T)[:, 2].max() + pos[2]
        got = cyl.support_z(pos, quat)
        assert got >= want - 1e-12
        assert got - want < 1e-5   # 720-point rim discretization gap
