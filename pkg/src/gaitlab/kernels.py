"""Numba kernels for the hand+object simulation.

All simulator state lives in one flat float64 vector so snapshots are exact
copies. Layout constants below; parameter packing mirrors it. Every routine
is deterministic: fixed iteration order, no fastmath, no hidden state.
"""

import numpy as np
from numba import njit

# state vector layout (length S_LEN)
S_Q = 0          # joint positions, 16
S_DQ = 16        # joint velocities, 16
S_QD = 32        # controller set-points, 16
S_OP = 48        # object position, 3
S_OQ = 51        # object quaternion wxyz, 4
S_OV = 55        # object linear velocity, 3
S_OW = 58        # object angular velocity, 3
S_EF = 61        # external force on object, 3
S_ET = 64        # external force time remaining, 1
S_LEN = 65

N_FINGERS = 4
N_JOINTS = 16

# packed scalar parameters
P_L1, P_L2, P_L3, P_RTIP, P_RLINK = 0, 1, 2, 3, 4
P_KP, P_KD, P_IEFF, P_TMAX, P_ALIM = 5, 6, 7, 8, 9
P_MASS, P_IBX, P_IBY, P_IBZ = 10, 11, 12, 13
P_GX, P_GY, P_GZ = 14, 15, 16
P_KN, P_CN, P_MU = 17, 18, 19
P_PALMR, P_PALMZ = 20, 21
P_NFRIC, P_SHAPE, P_SP0, P_SP1 = 22, 23, 24, 25
P_ROLLC = 26
P_LEN = 27

SHAPE_SPHERE, SHAPE_CYLINDER, SHAPE_ICOSA, SHAPE_DODECA, SHAPE_CUBE = 0, 1, 2, 3, 4

# step-result misc layout
M_NONFINGERTIP = 0
M_DIVERGED = 1
M_NTIP = 2
M_PALM = 3
M_FSUM = 4       # net contact force on object, 3
M_FNSUM = 7      # summed fingertip normal force magnitude
M_MAXDEPTH = 8
M_NLINK = 9
M_LEN = 16

# collision spheres per finger: (link index, fraction along link)
_LINK_SPHERES = np.array([
    (0, 0.40), (0, 0.80),
    (1, 0.40), (1, 0.80),
    (2, 0.35), (2, 0.70),
], dtype=np.float64)


@njit(cache=True)
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit(cache=True)
def _quat_to_mat(q, R):
    w, x, y, z = q[0], q[1], q[2], q[3]
    R[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[0, 1] = 2.0 * (x * y - w * z)
    R[0, 2] = 2.0 * (x * z + w * y)
    R[1, 0] = 2.0 * (x * y + w * z)
    R[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[1, 2] = 2.0 * (y * z - w * x)
    R[2, 0] = 2.0 * (x * z - w * y)
    R[2, 1] = 2.0 * (y * z + w * x)
    R[2, 2] = 1.0 - 2.0 * (x * x + y * y)


@njit(cache=True)
def fk_finger(qf, base, ax_out, ax_tan, lengths, pts, e_t):
    """Forward kinematics of one finger.

    Joint 0 abducts about the outward radial axis at the base; joints 1-3 are
    a planar flexion chain about the (abducted) tangential axis, measured from
    straight down with positive values curling inward. Fills pts (4,3) with
    base, two knuckle points, fingertip center, and e_t (3,) with the flexion
    axis.
    """
    psi = qf[0]
    cpsi, spsi = np.cos(psi), np.sin(psi)
    # e_t = Rot(ax_out, psi) @ ax_tan ; e_d = Rot(ax_out, psi) @ (0,0,-1)
    ed = np.empty(3)
    for k in range(3):
        e_t[k] = cpsi * ax_tan[k]
        ed[k] = spsi * ax_tan[k]
    e_t[2] += spsi
    ed[2] -= cpsi
    for k in range(3):
        pts[0, k] = base[k]
    a = 0.0
    for i in range(3):
        a += qf[i + 1]
        ca, sa = np.cos(a), np.sin(a)
        L = lengths[i]
        for k in range(3):
            pts[i + 1, k] = pts[i, k] + L * (ca * ed[k] - sa * ax_out[k])


@njit(cache=True)
def jac_point(pts, ax_out, e_t, point, last_joint, J):
    """Jacobian columns (4,3) of a point attached after `last_joint` (0..3)."""
    for j in range(4):
        for k in range(3):
            J[j, k] = 0.0
    d = np.empty(3)
    c = np.empty(3)
    for j in range(last_joint + 1):
        org = pts[0] if j <= 1 else pts[j - 1]
        axis = ax_out if j == 0 else e_t
        for k in range(3):
            d[k] = point[k] - org[k]
        _cross(axis, d, c)
        for k in range(3):
            J[j, k] = c[k]


@njit(cache=True)
def _closest_point_triangle(p, a, b, c, out):
    """Closest point on triangle abc to p (Ericson, Real-Time Collision Detection)."""
    ab = np.empty(3)
    ac = np.empty(3)
    ap = np.empty(3)
    for k in range(3):
        ab[k] = b[k] - a[k]
        ac[k] = c[k] - a[k]
        ap[k] = p[k] - a[k]
    d1 = ab[0] * ap[0] + ab[1] * ap[1] + ab[2] * ap[2]
    d2 = ac[0] * ap[0] + ac[1] * ap[1] + ac[2] * ap[2]
    if d1 <= 0.0 and d2 <= 0.0:
        for k in range(3):
            out[k] = a[k]
        return
    bp = np.empty(3)
    for k in range(3):
        bp[k] = p[k] - b[k]
    d3 = ab[0] * bp[0] + ab[1] * bp[1] + ab[2] * bp[2]
    d4 = ac[0] * bp[0] + ac[1] * bp[1] + ac[2] * bp[2]
    if d3 >= 0.0 and d4 <= d3:
        for k in range(3):
            out[k] = b[k]
        return
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        for k in range(3):
            out[k] = a[k] + v * ab[k]
        return
    cp = np.empty(3)
    for k in range(3):
        cp[k] = p[k] - c[k]
    d5 = ab[0] * cp[0] + ab[1] * cp[1] + ab[2] * cp[2]
    d6 = ac[0] * cp[0] + ac[1] * cp[1] + ac[2] * cp[2]
    if d6 >= 0.0 and d5 <= d6:
        for k in range(3):
            out[k] = c[k]
        return
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        for k in range(3):
            out[k] = a[k] + w * ac[k]
        return
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        for k in range(3):
            out[k] = b[k] + w * (c[k] - b[k])
        return
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    for k in range(3):
        out[k] = a[k] + ab[k] * v + ac[k] * w


@njit(cache=True)
def _signed_distance_local(p, shape_id, sp0, sp1, verts, tris, planes, c, n):
    """Signed distance from p to the object surface in the object frame.

    Fills c with the closest surface point and n with the outward unit normal
    there. Negative return means p is inside.
    """
    if shape_id == SHAPE_SPHERE:
        d = np.sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
        if d < 1e-12:
            n[0], n[1], n[2] = 0.0, 0.0, 1.0
        else:
            for k in range(3):
                n[k] = p[k] / d
        for k in range(3):
            c[k] = n[k] * sp0
        return d - sp0

    if shape_id == SHAPE_CYLINDER:
        rho = np.sqrt(p[0] * p[0] + p[1] * p[1])
        if rho <= sp0 and abs(p[2]) <= sp1:
            gap_side = sp0 - rho
            gap_cap = sp1 - abs(p[2])
            if gap_side < gap_cap:
                if rho < 1e-12:
                    n[0], n[1], n[2] = 1.0, 0.0, 0.0
                else:
                    n[0], n[1], n[2] = p[0] / rho, p[1] / rho, 0.0
                s = -gap_side
            else:
                n[0], n[1] = 0.0, 0.0
                n[2] = 1.0 if p[2] >= 0.0 else -1.0
                s = -gap_cap
            for k in range(3):
                c[k] = p[k] - s * n[k]
            return s
        # outside: clamp to the solid
        if rho > sp0:
            cx, cy = p[0] * sp0 / rho, p[1] * sp0 / rho
        else:
            cx, cy = p[0], p[1]
        cz = sp1 if p[2] > sp1 else (-sp1 if p[2] < -sp1 else p[2])
        c[0], c[1], c[2] = cx, cy, cz
        dx, dy, dz = p[0] - cx, p[1] - cy, p[2] - cz
        s = np.sqrt(dx * dx + dy * dy + dz * dz)
        for k in range(3):
            n[k] = (p[k] - c[k]) / s
        return s

    if shape_id == SHAPE_CUBE:
        a = sp0
        inside = abs(p[0]) < a and abs(p[1]) < a and abs(p[2]) < a
        if inside:
            best = 0
            gap = a - abs(p[0])
            g1 = a - abs(p[1])
            if g1 < gap:
                gap, best = g1, 1
            g2 = a - abs(p[2])
            if g2 < gap:
                gap, best = g2, 2
            for k in range(3):
                n[k] = 0.0
            n[best] = 1.0 if p[best] >= 0.0 else -1.0
            s = -gap
            for k in range(3):
                c[k] = p[k] - s * n[k]
            return s
        for k in range(3):
            c[k] = min(max(p[k], -a), a)
        dx, dy, dz = p[0] - c[0], p[1] - c[1], p[2] - c[2]
        s = np.sqrt(dx * dx + dy * dy + dz * dz)
        for k in range(3):
            n[k] = (p[k] - c[k]) / s
        return s

    # convex polyhedron: plane test for inside, triangle sweep outside
    max_v = -1e30
    best_f = 0
    for f in range(planes.shape[0]):
        v = planes[f, 0] * p[0] + planes[f, 1] * p[1] + planes[f, 2] * p[2] - planes[f, 3]
        if v > max_v:
            max_v = v
            best_f = f
    if max_v <= 1e-12:
        for k in range(3):
            n[k] = planes[best_f, k]
            c[k] = p[k] - max_v * n[k]
        return max_v
    best_d2 = 1e30
    tmp = np.empty(3)
    for t in range(tris.shape[0]):
        _closest_point_triangle(p, verts[tris[t, 0]], verts[tris[t, 1]], verts[tris[t, 2]], tmp)
        d2 = ((p[0] - tmp[0]) ** 2 + (p[1] - tmp[1]) ** 2 + (p[2] - tmp[2]) ** 2)
        if d2 < best_d2:
            best_d2 = d2
            for k in range(3):
                c[k] = tmp[k]
    s = np.sqrt(best_d2)
    if s < 1e-12:
        for k in range(3):
            n[k] = planes[best_f, k]
        return 0.0
    for k in range(3):
        n[k] = (p[k] - c[k]) / s
    return s


@njit(cache=True)
def sphere_object_distance(p_world, obj_pos, R, shape_id, sp0, sp1, verts, tris, planes,
                           c_world, n_world):
    """Signed distance from a world-frame point to the object surface.

    R is the object's rotation matrix. Fills c_world (closest surface point)
    and n_world (outward normal).
    """
    pl = np.empty(3)
    for i in range(3):
        pl[i] = (R[0, i] * (p_world[0] - obj_pos[0])
                 + R[1, i] * (p_world[1] - obj_pos[1])
                 + R[2, i] * (p_world[2] - obj_pos[2]))
    cl = np.empty(3)
    nl = np.empty(3)
    s = _signed_distance_local(pl, shape_id, sp0, sp1, verts, tris, planes, cl, nl)
    for i in range(3):
        c_world[i] = R[i, 0] * cl[0] + R[i, 1] * cl[1] + R[i, 2] * cl[2] + obj_pos[i]
        n_world[i] = R[i, 0] * nl[0] + R[i, 1] * nl[1] + R[i, 2] * nl[2]
    return s


@njit(cache=True)
def _support_z(obj_pos, R, shape_id, sp0, sp1, verts):
    """World z of the object's highest surface point."""
    if shape_id == SHAPE_SPHERE:
        return obj_pos[2] + sp0
    if shape_id == SHAPE_CYLINDER:
        az = abs(R[2, 2])
        rim = np.sqrt(max(0.0, 1.0 - R[2, 2] * R[2, 2]))
        return obj_pos[2] + sp1 * az + sp0 * rim
    if shape_id == SHAPE_CUBE:
        a = sp0
        return obj_pos[2] + a * (abs(R[2, 0]) + abs(R[2, 1]) + abs(R[2, 2]))
    best = -1e30
    for v in range(verts.shape[0]):
        z = R[2, 0] * verts[v, 0] + R[2, 1] * verts[v, 1] + R[2, 2] * verts[v, 2]
        if z > best:
            best = z
    return obj_pos[2] + best


@njit(cache=True)
def control_step(state, dqd_cmd, n_sub, h, qlo, qhi, base_pos, ax_out, ax_tan, par,
                 verts, tris, planes, out_rep, out_misc):
    """Advance the simulation by n_sub physics substeps of h seconds.

    The set-point command is applied once at the start (clamped to the action
    limit, then to joint limits). Contact reports in out_rep/out_misc describe
    the state after the final substep, so a later stateless contact query on
    the same state reproduces them. n_sub = 0 performs the query alone.
    """
    L = np.empty(3)
    L[0], L[1], L[2] = par[P_L1], par[P_L2], par[P_L3]
    r_tip = par[P_RTIP]
    r_link = par[P_RLINK]
    kp, kd, ieff, tmax = par[P_KP], par[P_KD], par[P_IEFF], par[P_TMAX]
    alim = par[P_ALIM]
    mass = par[P_MASS]
    inv_m = 1.0 / mass
    kn, cn, mu = par[P_KN], par[P_CN], par[P_MU]
    palm_r, palm_z = par[P_PALMR], par[P_PALMZ]
    n_fric = int(par[P_NFRIC])
    shape_id = int(par[P_SHAPE])
    sp0, sp1 = par[P_SP0], par[P_SP1]
    circum = sp0
    if shape_id == SHAPE_CYLINDER:
        circum = np.sqrt(sp0 * sp0 + sp1 * sp1)
    elif shape_id == SHAPE_CUBE:
        circum = sp0 * np.sqrt(3.0)

    # apply the commanded set-point change once
    for j in range(N_JOINTS):
        d = dqd_cmd[j]
        if d > alim:
            d = alim
        elif d < -alim:
            d = -alim
        v = state[S_QD + j] + d
        if v < qlo[j]:
            v = qlo[j]
        elif v > qhi[j]:
            v = qhi[j]
        state[S_QD + j] = v

    # scratch
    pts = np.empty((N_FINGERS, 4, 3))
    e_ts = np.empty((N_FINGERS, 3))
    Jtip = np.empty((N_FINGERS, 4, 3))
    Jtmp = np.empty((4, 3))
    R = np.empty((3, 3))
    Iw_inv = np.empty((3, 3))
    cpt = np.empty(3)
    nrm = np.empty(3)
    tau_c = np.empty(N_JOINTS)
    fobj = np.empty(3)
    tobj = np.empty(3)
    vs = np.empty(3)
    rr = np.empty(3)
    tmp3 = np.empty(3)
    tdir = np.empty(3)
    # fingertip contact records for the friction pass
    tc_fn = np.empty(N_FINGERS)
    tc_c = np.empty((N_FINGERS, 3))
    tc_n = np.empty((N_FINGERS, 3))
    tc_on = np.zeros(N_FINGERS, dtype=np.int64)
    ib = np.empty(3)
    ib[0], ib[1], ib[2] = par[P_IBX], par[P_IBY], par[P_IBZ]

    for m in range(M_LEN):
        out_misc[m] = 0.0
    for f in range(N_FINGERS):
        for k in range(8):
            out_rep[f, k] = 0.0

    diverged = False
    n_steps = n_sub if n_sub > 0 else 0
    for istep in range(n_steps + 1):
        report_only = istep == n_steps
        quat = state[S_OQ:S_OQ + 4]
        _quat_to_mat(quat, R)
        # Iw_inv = R diag(1/ib) R^T
        for i in range(3):
            for j in range(3):
                Iw_inv[i, j] = (R[i, 0] * R[j, 0] / ib[0]
                                + R[i, 1] * R[j, 1] / ib[1]
                                + R[i, 2] * R[j, 2] / ib[2])

        for j in range(N_JOINTS):
            tau_c[j] = 0.0
        for k in range(3):
            fobj[k] = 0.0
            tobj[k] = 0.0
        n_tip = 0
        n_link = 0
        nonfingertip = False
        palm_hit = False
        fn_sum = 0.0
        max_depth = 0.0
        if report_only:
            for f in range(N_FINGERS):
                for k in range(8):
                    out_rep[f, k] = 0.0

        obj_pos = state[S_OP:S_OP + 3]
        obj_v = state[S_OV:S_OV + 3]
        obj_w = state[S_OW:S_OW + 3]

        for f in range(N_FINGERS):
            fk_finger(state[S_Q + 4 * f:S_Q + 4 * f + 4], base_pos[f], ax_out[f],
                      ax_tan[f], L, pts[f], e_ts[f])
            tc_on[f] = 0

        # fingertip and link-sphere contacts against the object
        for f in range(N_FINGERS):
            for sph in range(7):
                if sph == 0:
                    link = 2
                    r_s = r_tip
                    px = pts[f, 3, 0]
                    py = pts[f, 3, 1]
                    pz = pts[f, 3, 2]
                else:
                    link = int(_LINK_SPHERES[sph - 1, 0])
                    frac = _LINK_SPHERES[sph - 1, 1]
                    r_s = r_link
                    px = pts[f, link, 0] + frac * (pts[f, link + 1, 0] - pts[f, link, 0])
                    py = pts[f, link, 1] + frac * (pts[f, link + 1, 1] - pts[f, link, 1])
                    pz = pts[f, link, 2] + frac * (pts[f, link + 1, 2] - pts[f, link, 2])
                dx = px - obj_pos[0]
                dy = py - obj_pos[1]
                dz = pz - obj_pos[2]
                if dx * dx + dy * dy + dz * dz > (circum + r_s + 0.002) ** 2:
                    continue
                tmp3[0], tmp3[1], tmp3[2] = px, py, pz
                s = sphere_object_distance(tmp3, obj_pos, R, shape_id, sp0, sp1,
                                           verts, tris, planes, cpt, nrm)
                depth = r_s - s
                if depth <= 0.0:
                    continue
                # cap the spring force so deeply penetrating starts (e.g.
                # IK-seeded grasps) relax instead of exploding
                if depth > 0.004:
                    depth = 0.004
                last_joint = 3 if sph == 0 else link + 1
                jac_point(pts[f], ax_out[f], e_ts[f], tmp3, last_joint, Jtmp)
                # sphere point velocity and object surface point velocity
                for k in range(3):
                    vs[k] = 0.0
                for j in range(4):
                    qv = state[S_DQ + 4 * f + j]
                    for k in range(3):
                        vs[k] += qv * Jtmp[j, k]
                for k in range(3):
                    rr[k] = cpt[k] - obj_pos[k]
                _cross(obj_w, rr, tmp3)
                # separation rate along outward normal
                approach = 0.0
                for k in range(3):
                    approach += nrm[k] * (vs[k] - (obj_v[k] + tmp3[k]))
                # damping bounded by the spring term: force stays in
                # [0, 2 k depth] and goes to zero continuously at touchdown
                spring = kn * depth
                damp = -cn * approach
                if damp > spring:
                    damp = spring
                elif damp < -spring:
                    damp = -spring
                fn = spring + damp
                if not report_only:
                    for k in range(3):
                        fobj[k] -= fn * nrm[k]
                    _cross(rr, nrm, tmp3)
                    for k in range(3):
                        tobj[k] -= fn * tmp3[k]
                    for j in range(4):
                        dot = 0.0
                        for k in range(3):
                            dot += Jtmp[j, k] * nrm[k]
                        tau_c[4 * f + j] += fn * dot
                if sph == 0:
                    n_tip += 1
                    fn_sum += fn
                    if depth > max_depth:
                        max_depth = depth
                    if not report_only:
                        tc_on[f] = 1
                        tc_fn[f] = fn
                        for k in range(3):
                            tc_c[f, k] = cpt[k]
                            tc_n[f, k] = nrm[k]
                        for j in range(4):
                            for k in range(3):
                                Jtip[f, j, k] = Jtmp[j, k]
                    else:
                        out_rep[f, 0] = 1.0
                        out_rep[f, 1] = cpt[0]
                        out_rep[f, 2] = cpt[1]
                        out_rep[f, 3] = cpt[2]
                        out_rep[f, 4] = fn
                        # reported normal: fingertip center through contact point
                        ex = cpt[0] - pts[f, 3, 0]
                        ey = cpt[1] - pts[f, 3, 1]
                        ez = cpt[2] - pts[f, 3, 2]
                        en = np.sqrt(ex * ex + ey * ey + ez * ez)
                        if en > 1e-12:
                            out_rep[f, 5] = ex / en
                            out_rep[f, 6] = ey / en
                            out_rep[f, 7] = ez / en
                else:
                    n_link += 1
                    nonfingertip = True

        # palm plane (downward-facing disc at z = palm_z)
        zs = _support_z(obj_pos, R, shape_id, sp0, sp1, verts)
        if zs > palm_z:
            rho = np.sqrt(obj_pos[0] * obj_pos[0] + obj_pos[1] * obj_pos[1])
            if rho < palm_r:
                palm_hit = True
                nonfingertip = True
                if not report_only:
                    spring = kn * (zs - palm_z)
                    damp = -cn * obj_v[2]
                    if damp > spring:
                        damp = spring
                    elif damp < -spring:
                        damp = -spring
                    fobj[2] -= spring + damp

        if report_only:
            out_misc[M_NONFINGERTIP] = 1.0 if nonfingertip else 0.0
            out_misc[M_NTIP] = float(n_tip)
            out_misc[M_PALM] = 1.0 if palm_hit else 0.0
            out_misc[M_NLINK] = float(n_link)
            out_misc[M_FNSUM] = fn_sum
            out_misc[M_MAXDEPTH] = max_depth
            break

        # fingertip-fingertip repulsion (spheres), joints only
        for fa in range(N_FINGERS):
            for fb in range(fa + 1, N_FINGERS):
                dx = pts[fa, 3, 0] - pts[fb, 3, 0]
                dy = pts[fa, 3, 1] - pts[fb, 3, 1]
                dz = pts[fa, 3, 2] - pts[fb, 3, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 >= (2.0 * r_tip) ** 2 or d2 < 1e-16:
                    continue
                d = np.sqrt(d2)
                depth = 2.0 * r_tip - d
                nx, ny, nz = dx / d, dy / d, dz / d
                fmag = kn * depth
                for pair in range(2):
                    fi = fa if pair == 0 else fb
                    sgn = 1.0 if pair == 0 else -1.0
                    jac_point(pts[fi], ax_out[fi], e_ts[fi], pts[fi, 3], 3, Jtmp)
                    for j in range(4):
                        dot = Jtmp[j, 0] * nx + Jtmp[j, 1] * ny + Jtmp[j, 2] * nz
                        tau_c[4 * fi + j] += sgn * fmag * dot

        # external wrench at the center of mass
        if state[S_ET] > 0.0:
            for k in range(3):
                fobj[k] += state[S_EF + k]
            state[S_ET] = max(0.0, state[S_ET] - h)

        for k in range(M_FSUM, M_FSUM + 3):
            out_misc[k] = fobj[k - M_FSUM]
        out_misc[M_FNSUM] = fn_sum

        # velocity updates (semi-implicit)
        for j in range(N_JOINTS):
            err = state[S_QD + j] - state[S_Q + j]
            tau = kp * err - kd * state[S_DQ + j]
            if tau > tmax:
                tau = tmax
            elif tau < -tmax:
                tau = -tmax
            state[S_DQ + j] += h * (tau + tau_c[j]) / ieff
        gx, gy, gz = par[P_GX], par[P_GY], par[P_GZ]
        state[S_OV + 0] += h * (fobj[0] * inv_m + gx)
        state[S_OV + 1] += h * (fobj[1] * inv_m + gy)
        state[S_OV + 2] += h * (fobj[2] * inv_m + gz)
        # world-frame Euler equation: dw = Iw_inv (tau - w x Iw w)
        for i in range(3):
            tmp3[i] = (R[i, 0] * ib[0] * (R[0, 0] * obj_w[0] + R[1, 0] * obj_w[1] + R[2, 0] * obj_w[2])
                       + R[i, 1] * ib[1] * (R[0, 1] * obj_w[0] + R[1, 1] * obj_w[1] + R[2, 1] * obj_w[2])
                       + R[i, 2] * ib[2] * (R[0, 2] * obj_w[0] + R[1, 2] * obj_w[1] + R[2, 2] * obj_w[2]))
        _cross(obj_w, tmp3, rr)
        for i in range(3):
            tq = tobj[i] - rr[i]
            tmp3[i] = tq
        for i in range(3):
            acc = Iw_inv[i, 0] * tmp3[0] + Iw_inv[i, 1] * tmp3[1] + Iw_inv[i, 2] * tmp3[2]
            state[S_OW + i] += h * acc

        # stick/slip friction impulses at fingertip contacts
        for _pass in range(n_fric):
            for f in range(N_FINGERS):
                if tc_on[f] == 0:
                    continue
                for k in range(3):
                    rr[k] = tc_c[f, k] - obj_pos[k]
                _cross(obj_w, rr, tmp3)
                for k in range(3):
                    vs[k] = 0.0
                for j in range(4):
                    qv = state[S_DQ + 4 * f + j]
                    for k in range(3):
                        vs[k] += qv * Jtip[f, j, k]
                un = 0.0
                for k in range(3):
                    tdir[k] = obj_v[k] + tmp3[k] - vs[k]
                    un += tdir[k] * tc_n[f, k]
                ut2 = 0.0
                for k in range(3):
                    tdir[k] -= un * tc_n[f, k]
                    ut2 += tdir[k] * tdir[k]
                ut = np.sqrt(ut2)
                if ut < 1e-10:
                    continue
                for k in range(3):
                    tdir[k] /= ut
                _cross(rr, tdir, tmp3)
                kin = inv_m
                for i in range(3):
                    acc = Iw_inv[i, 0] * tmp3[0] + Iw_inv[i, 1] * tmp3[1] + Iw_inv[i, 2] * tmp3[2]
                    kin += tmp3[i] * acc
                for j in range(4):
                    dot = 0.0
                    for k in range(3):
                        dot += Jtip[f, j, k] * tdir[k]
                    kin += dot * dot / ieff
                imp = ut / kin
                cap = mu * tc_fn[f] * h
                if imp > cap:
                    imp = cap
                for k in range(3):
                    obj_v[k] -= imp * tdir[k] * inv_m
                _cross(rr, tdir, tmp3)
                for i in range(3):
                    acc = Iw_inv[i, 0] * tmp3[0] + Iw_inv[i, 1] * tmp3[1] + Iw_inv[i, 2] * tmp3[2]
                    obj_w[i] -= imp * acc
                for j in range(4):
                    dot = 0.0
                    for k in range(3):
                        dot += Jtip[f, j, k] * tdir[k]
                    state[S_DQ + 4 * f + j] += imp * dot / ieff

        # rolling resistance: Coulomb torque proportional to total grip force,
        # lever = contact patch radius. Removes residual spin without fighting
        # the much larger gait-driving friction torques.
        rollc = par[P_ROLLC]
        if rollc > 0.0 and fn_sum > 0.0:
            for i in range(3):
                tmp3[i] = (R[i, 0] * ib[0] * (R[0, 0] * obj_w[0] + R[1, 0] * obj_w[1] + R[2, 0] * obj_w[2])
                           + R[i, 1] * ib[1] * (R[0, 1] * obj_w[0] + R[1, 1] * obj_w[1] + R[2, 1] * obj_w[2])
                           + R[i, 2] * ib[2] * (R[0, 2] * obj_w[0] + R[1, 2] * obj_w[1] + R[2, 2] * obj_w[2]))
            lmag = np.sqrt(tmp3[0] ** 2 + tmp3[1] ** 2 + tmp3[2] ** 2)
            if lmag > 1e-18:
                drop = rollc * fn_sum * h
                if drop > lmag:
                    drop = lmag
                scale = 1.0 - drop / lmag
                for i in range(3):
                    tmp3[i] *= scale
                for i in range(3):
                    obj_w[i] = (Iw_inv[i, 0] * tmp3[0] + Iw_inv[i, 1] * tmp3[1]
                                + Iw_inv[i, 2] * tmp3[2])

        # position updates
        for j in range(N_JOINTS):
            v = state[S_Q + j] + h * state[S_DQ + j]
            if v < qlo[j]:
                v = qlo[j]
                if state[S_DQ + j] < 0.0:
                    state[S_DQ + j] = 0.0
            elif v > qhi[j]:
                v = qhi[j]
                if state[S_DQ + j] > 0.0:
                    state[S_DQ + j] = 0.0
            state[S_Q + j] = v
        for k in range(3):
            state[S_OP + k] += h * obj_v[k]
        wmag = np.sqrt(obj_w[0] ** 2 + obj_w[1] ** 2 + obj_w[2] ** 2)
        if wmag > 1e-12:
            half = 0.5 * wmag * h
            cw, sw = np.cos(half), np.sin(half)
            ax, ay, az = obj_w[0] / wmag, obj_w[1] / wmag, obj_w[2] / wmag
            qw, qx, qy, qz = cw, sw * ax, sw * ay, sw * az
            bw, bx, by, bz = quat[0], quat[1], quat[2], quat[3]
            quat[0] = qw * bw - qx * bx - qy * by - qz * bz
            quat[1] = qw * bx + qx * bw + qy * bz - qz * by
            quat[2] = qw * by - qx * bz + qy * bw + qz * bx
            quat[3] = qw * bz + qx * by - qy * bx + qz * bw
            qn = np.sqrt(quat[0] ** 2 + quat[1] ** 2 + quat[2] ** 2 + quat[3] ** 2)
            for k in range(4):
                quat[k] /= qn

        # divergence guard
        ok = True
        for idx in range(S_LEN):
            if not np.isfinite(state[idx]):
                ok = False
                break
        if ok:
            vmag = np.sqrt(obj_v[0] ** 2 + obj_v[1] ** 2 + obj_v[2] ** 2)
            if vmag > 20.0 or wmag > 400.0:
                ok = False
        if ok:
            for j in range(N_JOINTS):
                if abs(state[S_DQ + j]) > 200.0:
                    ok = False
                    break
        if not ok:
            diverged = True
            break

    out_misc[M_DIVERGED] = 1.0 if diverged else 0.0


@njit(cache=True)
def ik_finger(qf0, base, ax_out, ax_tan, lengths, lo, hi, target,
              iters, damping, tol, out_q):
    """Damped-least-squares IK for one finger's tip center.

    Iterates from qf0 with joint-limit clamping and a trust-region step cap,
    keeping the best iterate. Returns the best residual in meters.
    """
    pts = np.empty((4, 3))
    e_t = np.empty(3)
    J = np.empty((4, 3))
    qf = np.empty(4)
    best_q = np.empty(4)
    r = np.empty(3)
    g = np.empty(3)
    for j in range(4):
        qf[j] = qf0[j]
        best_q[j] = qf0[j]
    best_e = 1e30
    for _it in range(iters):
        fk_finger(qf, base, ax_out, ax_tan, lengths, pts, e_t)
        err2 = 0.0
        for k in range(3):
            r[k] = target[k] - pts[3, k]
            err2 += r[k] * r[k]
        e = np.sqrt(err2)
        if e < best_e:
            best_e = e
            for j in range(4):
                best_q[j] = qf[j]
        if e < tol:
            break
        jac_point(pts, ax_out, e_t, pts[3], 3, J)
        # A = J^T J (3x3, J is joints x xyz) + lam I ; solve A g = r.
        # lam shrinks with the residual so the bias of the damped step
        # vanishes as the solve converges (damping is the value at 1 cm).
        lam = damping * (e * 100.0)
        if lam < 1e-8:
            lam = 1e-8
        elif lam > 1.0:
            lam = 1.0
        a00 = lam
        a01 = 0.0
        a02 = 0.0
        a11 = lam
        a12 = 0.0
        a22 = lam
        for j in range(4):
            a00 += J[j, 0] * J[j, 0]
            a01 += J[j, 0] * J[j, 1]
            a02 += J[j, 0] * J[j, 2]
            a11 += J[j, 1] * J[j, 1]
            a12 += J[j, 1] * J[j, 2]
            a22 += J[j, 2] * J[j, 2]
        # inverse of the symmetric 3x3 via adjugate
        c00 = a11 * a22 - a12 * a12
        c01 = a02 * a12 - a01 * a22
        c02 = a01 * a12 - a02 * a11
        det = a00 * c00 + a01 * c01 + a02 * c02
        if abs(det) < 1e-18:
            break
        c11 = a00 * a22 - a02 * a02
        c12 = a01 * a02 - a00 * a12
        c22 = a00 * a11 - a01 * a01
        g[0] = (c00 * r[0] + c01 * r[1] + c02 * r[2]) / det
        g[1] = (c01 * r[0] + c11 * r[1] + c12 * r[2]) / det
        g[2] = (c02 * r[0] + c12 * r[1] + c22 * r[2]) / det
        dq0 = J[0, 0] * g[0] + J[0, 1] * g[1] + J[0, 2] * g[2]
        dq1 = J[1, 0] * g[0] + J[1, 1] * g[1] + J[1, 2] * g[2]
        dq2 = J[2, 0] * g[0] + J[2, 1] * g[1] + J[2, 2] * g[2]
        dq3 = J[3, 0] * g[0] + J[3, 1] * g[1] + J[3, 2] * g[2]
        step2 = dq0 * dq0 + dq1 * dq1 + dq2 * dq2 + dq3 * dq3
        scale = 1.0
        if step2 > 0.25:
            scale = 0.5 / np.sqrt(step2)
        qf[0] += dq0 * scale
        qf[1] += dq1 * scale
        qf[2] += dq2 * scale
        qf[3] += dq3 * scale
        for j in range(4):
            if qf[j] < lo[j]:
                qf[j] = lo[j]
            elif qf[j] > hi[j]:
                qf[j] = hi[j]
    for j in range(4):
        out_q[j] = best_q[j]
    return best_e


@njit(cache=True)
def fingertip_positions(q, base_pos, ax_out, ax_tan, lengths, out):
    """Fingertip centers (4,3) for a full joint vector."""
    pts = np.empty((4, 3))
    e_t = np.empty(3)
    for f in range(N_FINGERS):
        fk_finger(q[4 * f:4 * f + 4], base_pos[f], ax_out[f], ax_tan[f], lengths, pts, e_t)
        for k in range(3):
            out[f, k] = pts[3, k]
