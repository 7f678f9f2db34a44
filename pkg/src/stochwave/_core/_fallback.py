"""Pure-numpy reference implementation of the stepper kernel.

Vectorizes over (site, node) per past slab.  This is the semantic
reference: the compiled kernel in ``_speedups`` must agree with it to
floating-point roundoff, and the benchmark in benchmarks/ compares the
two.  Python-callable coefficients (kind code 4) are only supported here.
"""

from __future__ import annotations

import numpy as np

_KIND_ZERO, _KIND_CONST, _KIND_AFFINE, _KIND_SIN, _KIND_CUSTOM = 0, 1, 2, 3, 4


def _ceval(kind, a, b, c, fn, u):
    if kind == _KIND_ZERO:
        return np.zeros_like(u) if isinstance(u, np.ndarray) else 0.0
    if kind == _KIND_CONST:
        return a if not isinstance(u, np.ndarray) else np.full_like(u, a)
    if kind == _KIND_AFFINE:
        return a + b * u
    if kind == _KIND_SIN:
        return a + b * np.sin(c * u)
    return fn(u)


def accumulate_step(
    out, X, M, WN, HH, act, pos, dirs,
    k, m_lo, m_hi, dt,
    lo0, lo1, lo2, sp, n0, n1, n2,
    kinds, pa, pb, pc, fns=(None, None, None, None),
):
    n_nodes = len(dirs)
    sites = pos[act]
    use = [
        M is not None and M.shape[0] > 0 and kinds[0] != 0,
        WN is not None and WN.shape[0] > 0 and kinds[1] != 0,
        HH is not None and HH.shape[0] > 0 and kinds[2] != 0,
        kinds[3] != 0,
    ]
    need_x = any(u and kinds[i] >= 2 for i, u in enumerate(use))
    lo = np.array([lo0, lo1, lo2])
    nmax = np.array([n0 - 2, n1 - 2, n2 - 2])
    s1 = n1 * n2
    offsets = np.array([0, 1, n2, n2 + 1, s1, s1 + 1, s1 + n2, s1 + n2 + 1])

    inv_sp = 1.0 / sp
    for m in range(m_lo, m_hi):
        r = (k - m) * dt
        p = sites[:, None, :] - r * dirs[None, :, :]
        q = (p - lo) * inv_sp
        i = np.floor(q).astype(np.int64)
        np.clip(i, 0, nmax, out=i)
        f = np.clip(q - i, 0.0, 1.0)
        base = (i[..., 0] * n1 + i[..., 1]) * n2 + i[..., 2]
        g0, g1, g2 = 1 - f[..., 0], 1 - f[..., 1], 1 - f[..., 2]
        f0, f1, f2 = f[..., 0], f[..., 1], f[..., 2]
        w8 = np.stack(
            [
                g0 * g1 * g2, g0 * g1 * f2, g0 * f1 * g2, g0 * f1 * f2,
                f0 * g1 * g2, f0 * g1 * f2, f0 * f1 * g2, f0 * f1 * f2,
            ],
            axis=-1,
        )
        idx = base[..., None] + offsets

        def terp(row):
            return np.einsum("snj,snj->sn", row[idx], w8)

        xn = terp(X[m]) if need_x else 0.0
        contrib = np.zeros(base.shape)
        if use[0]:
            contrib += _ceval(kinds[0], pa[0], pb[0], pc[0], fns[0], xn) * terp(M[m])
        if use[1]:
            contrib += _ceval(kinds[1], pa[1], pb[1], pc[1], fns[1], xn) * terp(WN[m])
        if use[2]:
            contrib += _ceval(kinds[2], pa[2], pb[2], pc[2], fns[2], xn) * terp(HH[m])
        if use[3]:
            contrib += _ceval(kinds[3], pa[3], pb[3], pc[3], fns[3], xn) * dt
        out += (r / n_nodes) * contrib.sum(axis=1)
    return None
