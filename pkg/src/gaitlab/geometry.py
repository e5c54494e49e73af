"""Quaternion utilities and rigid object shape definitions (meshes, inertia)."""

import numpy as np

SHAPE_NAMES = ("sphere", "cylinder", "icosahedron", "dodecahedron", "cube")
SHAPE_IDS = {name: i for i, name in enumerate(SHAPE_NAMES)}

_PHI = (1.0 + np.sqrt(5.0)) / 2.0


def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q)


def quat_mul(a, b):
    """Hamilton product, wxyz convention."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q, v):
    """Rotate vector v by unit quaternion q."""
    w, x, y, z = q
    u = np.array([x, y, z])
    return v + 2.0 * np.cross(u, np.cross(u, v) + w * np.asarray(v, dtype=np.float64))


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis / n))


def quat_from_matrix(m):
    """Shepperd's method; returns wxyz unit quaternion."""
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        return quat_normalize([0.25 * s, (m[2, 1] - m[1, 2]) / s,
                               (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
    i = int(np.argmax(np.diag(m)))
    j, k = (i + 1) % 3, (i + 2) % 3
    s = np.sqrt(m[i, i] - m[j, j] - m[k, k] + 1.0) * 2.0
    q = np.zeros(4)
    q[0] = (m[k, j] - m[j, k]) / s
    q[1 + i] = 0.25 * s
    q[1 + j] = (m[j, i] + m[i, j]) / s
    q[1 + k] = (m[k, i] + m[i, k]) / s
    return quat_normalize(q)


def random_quat(rng):
    """Uniform random unit quaternion (Shoemake)."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    return np.array([a * np.sin(2 * np.pi * u2), a * np.cos(2 * np.pi * u2),
                     b * np.sin(2 * np.pi * u3), b * np.cos(2 * np.pi * u3)])


def _icosahedron_vertices():
    v = []
    for a in (-1.0, 1.0):
        for b in (-_PHI, _PHI):
            v.append((0.0, a, b))
            v.append((a, b, 0.0))
            v.append((b, 0.0, a))
    v = np.array(v)
    return v / np.linalg.norm(v[0])


def _dodecahedron_vertices():
    v = []
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                v.append((sx, sy, sz))
    inv = 1.0 / _PHI
    for a in (-inv, inv):
        for b in (-_PHI, _PHI):
            v.append((0.0, a, b))
            v.append((a, b, 0.0))
            v.append((b, 0.0, a))
    v = np.array(v)
    return v / np.sqrt(3.0)


def _convex_mesh(vertices):
    """Triangulate a convex vertex cloud with outward-oriented faces.

    Returns (verts, tris, planes): planes are the distinct face half-spaces
    (unit normal, offset) with n.x <= d inside.
    """
    from scipy.spatial import ConvexHull

    hull = ConvexHull(vertices)
    verts = np.asarray(vertices, dtype=np.float64)
    tris = []
    centroid = verts.mean(axis=0)
    for simplex in hull.simplices:
        a, b, c = verts[simplex]
        n = np.cross(b - a, c - a)
        if np.dot(n, a - centroid) < 0:
            simplex = simplex[[0, 2, 1]]
        tris.append(simplex)
    tris = np.array(tris, dtype=np.int64)
    eqs = np.unique(np.round(hull.equations, 9), axis=0)
    planes = np.column_stack([eqs[:, :3], -eqs[:, 3]])  # n.x <= d
    return verts, tris, planes


def polyhedron_volume_inertia(verts, tris, mass):
    """Volume and unit-density inertia of a closed triangulated solid,
    by signed tetrahedra against the origin; rescaled to the given mass.

    Returns (volume, inertia 3x3 about the centroid, centroid).
    """
    volume = 0.0
    com = np.zeros(3)
    # second moments accumulated as the covariance-like integral C_ij = ∫ x_i x_j dV
    cov = np.zeros((3, 3))
    for t in tris:
        a, b, c = verts[t[0]], verts[t[1]], verts[t[2]]
        d6 = np.dot(a, np.cross(b, c))  # 6 * signed tetra volume
        volume += d6 / 6.0
        com += d6 / 24.0 * (a + b + c)
        p = np.stack([a, b, c])
        s = p.sum(axis=0)
        cov += d6 / 120.0 * (np.outer(s, s) + p.T @ p)
    com /= volume
    cov -= volume * np.outer(com, com)
    inertia = np.trace(cov) * np.eye(3) - cov
    return volume, inertia * (mass / volume), com


class ObjectShape:
    """Convex object geometry at a given circumscribed radius and mass.

    Polyhedral shapes carry a triangulated mesh plus distinct face planes;
    sphere/cylinder/cube use analytic contact queries in the sim kernels and
    the mesh fields are empty. Body-frame inertia is diagonal for every
    supported shape.
    """

    def __init__(self, name, circumradius, mass):
        if name not in SHAPE_IDS:
            raise ValueError(f"unknown shape {name!r}; expected one of {SHAPE_NAMES}")
        self.name = name
        self.shape_id = SHAPE_IDS[name]
        self.circumradius = float(circumradius)
        self.mass = float(mass)
        r = self.circumradius
        m = self.mass
        self.params = np.zeros(2)
        self.verts = np.zeros((0, 3))
        self.tris = np.zeros((0, 3), dtype=np.int64)
        self.planes = np.zeros((0, 4))
        if name == "sphere":
            self.params[0] = r
            self.inertia_body = np.full(3, 0.4 * m * r * r)
        elif name == "cylinder":
            # radius/half-height chosen so the rim lies on the circumsphere
            radius, half_h = 0.8 * r, 0.6 * r
            self.params[:] = (radius, half_h)
            ixx = m * (3 * radius * radius + 4 * half_h * half_h) / 12.0
            self.inertia_body = np.array([ixx, ixx, 0.5 * m * radius * radius])
        else:
            if name == "cube":
                a = r / np.sqrt(3.0)
                self.params[0] = a  # half-edge, used by the analytic box query
                base = np.array([[sx, sy, sz] for sx in (-a, a)
                                 for sy in (-a, a) for sz in (-a, a)])
            elif name == "icosahedron":
                base = _icosahedron_vertices() * r
                self.params[0] = r  # bounding radius for broad-phase rejection
            else:
                base = _dodecahedron_vertices() * r
                self.params[0] = r
            self.verts, self.tris, self.planes = _convex_mesh(base)
            _, inertia, com = polyhedron_volume_inertia(self.verts, self.tris, m)
            assert np.allclose(com, 0.0, atol=1e-12 + 1e-9 * r)
            offdiag = inertia - np.diag(np.diag(inertia))
            assert np.abs(offdiag).max() < 1e-9 * np.abs(inertia).max()
            self.inertia_body = np.diag(inertia).copy()

    def support_z(self, pos, quat):
        """World z of the object's highest surface point (used for palm contact)."""
        if self.name == "sphere":
            return pos[2] + self.params[0]
        rot = quat_to_matrix(quat)
        if self.name == "cylinder":
            axis = rot[:, 2]
            rim = np.sqrt(max(0.0, 1.0 - axis[2] * axis[2]))
            return pos[2] + self.params[1] * abs(axis[2]) + self.params[0] * rim
        return pos[2] + (rot @ self.verts.T)[2].max()

    def support_along(self, direction):
        """Distance from the center to the surface along a body-frame ray."""
        d = np.asarray(direction, dtype=np.float64)
        d = d / np.linalg.norm(d)
        if self.name == "sphere":
            return float(self.params[0])
        if self.name == "cylinder":
            radius, half_h = self.params
            t = np.inf
            rho = np.hypot(d[0], d[1])
            if rho > 1e-12:
                t = radius / rho
            if abs(d[2]) > 1e-12:
                t = min(t, half_h / abs(d[2]))
            return float(t)
        # convex polyhedron (cube included): first exit plane
        t = np.inf
        for n0, n1, n2, dist in self.planes:
            denom = n0 * d[0] + n1 * d[1] + n2 * d[2]
            if denom > 1e-12:
                t = min(t, dist / denom)
        return float(t)

    def surface_distance_lower(self, point_body) -> float:
        """Lower bound on the distance from a body-frame point to the surface
        (negative inside). Exact for sphere and cylinder; for polyhedra the
        max face-plane distance, which under-reports near edges and corners
        but never exceeds the true distance."""
        p = np.asarray(point_body, dtype=np.float64)
        if self.name == "sphere":
            return float(np.linalg.norm(p) - self.params[0])
        if self.name == "cylinder":
            radius, half_h = self.params
            dr = np.hypot(p[0], p[1]) - radius
            dz = abs(p[2]) - half_h
            if dr <= 0.0 and dz <= 0.0:
                return float(max(dr, dz))
            return float(np.hypot(max(dr, 0.0), max(dz, 0.0)))
        return float(np.max(self.planes[:, :3] @ p - self.planes[:, 3]))
