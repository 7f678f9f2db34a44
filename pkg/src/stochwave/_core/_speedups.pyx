# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner kernel of the mild-form time stepper.

One call accumulates, for every active site s and one target time index k,
the sum over past slabs m and sphere nodes xi of

    (r/N) * [ A(X) * M + B(X) * WN + D(X) * HH + b(X) * dt ],   r = (k-m) dt,

where every lattice field is read by trilinear interpolation at the node
position s - r*xi and X is the field value interpolated from the slab-m
row.  Semantics must match stochwave._core._fallback.accumulate_step
exactly; the tests assert agreement.
"""

from libc.math cimport floor, sin


cdef inline double ceval(int kind, double a, double b, double c, double u) noexcept nogil:
    if kind == 0:
        return 0.0
    if kind == 1:
        return a
    if kind == 2:
        return a + b * u
    return a + b * sin(c * u)


def accumulate_step(
    double[::1] out,
    double[:, ::1] X,
    double[:, ::1] M,
    double[:, ::1] WN,
    double[:, ::1] HH,
    long long[::1] act,
    double[:, ::1] pos,
    double[:, ::1] dirs,
    int k, int m_lo, int m_hi, double dt,
    double lo0, double lo1, double lo2, double sp,
    int n0, int n1, int n2,
    int[::1] kinds, double[::1] pa, double[::1] pb, double[::1] pc,
):
    cdef Py_ssize_t n_sites = act.shape[0]
    cdef Py_ssize_t n_nodes = dirs.shape[0]
    cdef bint use_m = M.shape[0] > 0 and kinds[0] != 0
    cdef bint use_w = WN.shape[0] > 0 and kinds[1] != 0
    cdef bint use_h = HH.shape[0] > 0 and kinds[2] != 0
    cdef bint use_b = kinds[3] != 0
    cdef bint need_x = (
        (use_m and kinds[0] >= 2) or (use_w and kinds[1] >= 2)
        or (use_h and kinds[2] >= 2) or (use_b and kinds[3] >= 2)
    )
    cdef int s1 = n1 * n2
    cdef Py_ssize_t si, l, s
    cdef int m, i0, i1, i2, base
    cdef double inv_sp = 1.0 / sp
    cdef double r, wnode, sx, sy, sz, px, py, pz, q0, q1, q2, f0, f1, f2
    cdef double w000, w001, w010, w011, w100, w101, w110, w111
    cdef double xn, contrib, accv

    with nogil:
        for m in range(m_lo, m_hi):
            r = (k - m) * dt
            wnode = r / n_nodes
            for si in range(n_sites):
                s = act[si]
                sx = pos[s, 0]
                sy = pos[s, 1]
                sz = pos[s, 2]
                accv = 0.0
                for l in range(n_nodes):
                    px = sx - r * dirs[l, 0]
                    py = sy - r * dirs[l, 1]
                    pz = sz - r * dirs[l, 2]
                    q0 = (px - lo0) * inv_sp
                    q1 = (py - lo1) * inv_sp
                    q2 = (pz - lo2) * inv_sp
                    i0 = <int>floor(q0)
                    i1 = <int>floor(q1)
                    i2 = <int>floor(q2)
                    if i0 < 0: i0 = 0
                    elif i0 > n0 - 2: i0 = n0 - 2
                    if i1 < 0: i1 = 0
                    elif i1 > n1 - 2: i1 = n1 - 2
                    if i2 < 0: i2 = 0
                    elif i2 > n2 - 2: i2 = n2 - 2
                    f0 = q0 - i0
                    f1 = q1 - i1
                    f2 = q2 - i2
                    if f0 < 0.0: f0 = 0.0
                    elif f0 > 1.0: f0 = 1.0
                    if f1 < 0.0: f1 = 0.0
                    elif f1 > 1.0: f1 = 1.0
                    if f2 < 0.0: f2 = 0.0
                    elif f2 > 1.0: f2 = 1.0
                    base = (i0 * n1 + i1) * n2 + i2
                    w000 = (1 - f0) * (1 - f1) * (1 - f2)
                    w001 = (1 - f0) * (1 - f1) * f2
                    w010 = (1 - f0) * f1 * (1 - f2)
                    w011 = (1 - f0) * f1 * f2
                    w100 = f0 * (1 - f1) * (1 - f2)
                    w101 = f0 * (1 - f1) * f2
                    w110 = f0 * f1 * (1 - f2)
                    w111 = f0 * f1 * f2
                    if need_x:
                        xn = (
                            X[m, base] * w000 + X[m, base + 1] * w001
                            + X[m, base + n2] * w010 + X[m, base + n2 + 1] * w011
                            + X[m, base + s1] * w100 + X[m, base + s1 + 1] * w101
                            + X[m, base + s1 + n2] * w110 + X[m, base + s1 + n2 + 1] * w111
                        )
                    else:
                        xn = 0.0
                    contrib = 0.0
                    if use_m:
                        contrib = contrib + ceval(kinds[0], pa[0], pb[0], pc[0], xn) * (
                            M[m, base] * w000 + M[m, base + 1] * w001
                            + M[m, base + n2] * w010 + M[m, base + n2 + 1] * w011
                            + M[m, base + s1] * w100 + M[m, base + s1 + 1] * w101
                            + M[m, base + s1 + n2] * w110 + M[m, base + s1 + n2 + 1] * w111
                        )
                    if use_w:
                        contrib = contrib + ceval(kinds[1], pa[1], pb[1], pc[1], xn) * (
                            WN[m, base] * w000 + WN[m, base + 1] * w001
                            + WN[m, base + n2] * w010 + WN[m, base + n2 + 1] * w011
                            + WN[m, base + s1] * w100 + WN[m, base + s1 + 1] * w101
                            + WN[m, base + s1 + n2] * w110 + WN[m, base + s1 + n2 + 1] * w111
                        )
                    if use_h:
                        contrib = contrib + ceval(kinds[2], pa[2], pb[2], pc[2], xn) * (
                            HH[m, base] * w000 + HH[m, base + 1] * w001
                            + HH[m, base + n2] * w010 + HH[m, base + n2 + 1] * w011
                            + HH[m, base + s1] * w100 + HH[m, base + s1 + 1] * w101
                            + HH[m, base + s1 + n2] * w110 + HH[m, base + s1 + n2 + 1] * w111
                        )
                    if use_b:
                        contrib = contrib + ceval(kinds[3], pa[3], pb[3], pc[3], xn) * dt
                    accv += wnode * contrib
                out[si] += accv
    return None
