"""Holder-norm estimation on grid fields.

The norm is the sup plus the rho-seminorm in the additive space-time
metric |t - tbar| + |x - xbar| (Euclidean on the spatial factor), taken
over all grid points with t >= t0.  Pair enumeration is exhaustive up to
10^4 points and switches to binned subsampling above that (the report is
flagged).  Increment exponents are least-squares slopes of log E|dX|^p
against log distance over an ensemble of fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .kernels import ExponentEstimate
from .solver import FieldSample

__all__ = [
    "DegenerateGridError",
    "HolderReport",
    "fit_increment_exponent",
    "holder_distance",
    "holder_norm",
    "modulus_of_continuity",
]

EXHAUSTIVE_LIMIT = 10_000
_SUBSAMPLE_BINS = 32
_SUBSAMPLE_PER_BIN = 20_000


class DegenerateGridError(ValueError):
    """Too few grid points to form any pair."""


@dataclass(frozen=True)
class HolderReport:
    """Sup term, seminorm term and their sum, with the maximizing pair."""

    rho: float
    sup_term: float
    seminorm_term: float
    norm: float
    argmax_pair: tuple  # ((t, x), (tbar, xbar))
    modulus_curve: tuple = field(default=())
    subsampled: bool = False

    def as_dict(self) -> dict:
        (t1, x1), (t2, x2) = self.argmax_pair
        return {
            "rho": self.rho,
            "sup_term": self.sup_term,
            "seminorm_term": self.seminorm_term,
            "norm": self.norm,
            "argmax_pair": [[t1, list(np.asarray(x1, dtype=float))],
                            [t2, list(np.asarray(x2, dtype=float))]],
            "modulus_curve": [list(p) for p in self.modulus_curve],
            "subsampled": self.subsampled,
        }


def _flatten(fieldsample: FieldSample, t0: float):
    times = fieldsample.times
    keep = times >= t0 - 1e-12
    if not np.any(keep):
        raise DegenerateGridError(f"no grid times at or after t0={t0}")
    tt = times[keep]
    pts = fieldsample.eval_points
    vals = fieldsample.values[keep]
    t_flat = np.repeat(tt, len(pts))
    x_flat = np.tile(pts, (len(tt), 1))
    return t_flat, x_flat, vals.reshape(-1)


def _pair_blocks(n: int, block: int = 1024):
    for i0 in range(0, n, block):
        for j0 in range(i0, n, block):
            yield i0, min(i0 + block, n), j0, min(j0 + block, n)


def holder_norm(fieldsample: FieldSample, rho: float, t0: Optional[float] = None,
                rng_seed: int = 0) -> HolderReport:
    """Sup norm plus rho-Holder seminorm of the field restricted to t >= t0."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    t0 = fieldsample.t0 if t0 is None else float(t0)
    t_flat, x_flat, v = _flatten(fieldsample, t0)
    n = len(v)
    if n < 2:
        raise DegenerateGridError("need at least 2 grid points")
    sup_term = float(np.max(np.abs(v)))

    best = -1.0
    best_pair = (0, 1)
    subsampled = n > EXHAUSTIVE_LIMIT
    if not subsampled:
        for i0, i1, j0, j1 in _pair_blocks(n):
            dt = np.abs(t_flat[i0:i1, None] - t_flat[None, j0:j1])
            dx = np.linalg.norm(x_flat[i0:i1, None, :] - x_flat[None, j0:j1, :], axis=2)
            dist = dt + dx
            dv = np.abs(v[i0:i1, None] - v[None, j0:j1])
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(dist > 0, dv / dist**rho, -np.inf)
            flat = int(np.argmax(ratio))
            val = float(ratio.ravel()[flat])
            if val > best:
                best = val
                best_pair = (i0 + flat // ratio.shape[1], j0 + flat % ratio.shape[1])
    else:
        # binned pair subsample: up to the cap in each of 32 distance bins
        rng = np.random.default_rng(rng_seed)
        d_max = float(
            np.max(t_flat) - np.min(t_flat)
            + np.linalg.norm(np.max(x_flat, axis=0) - np.min(x_flat, axis=0))
        )
        edges = np.linspace(0.0, d_max, _SUBSAMPLE_BINS + 1)
        counts = np.zeros(_SUBSAMPLE_BINS, dtype=np.int64)
        target = _SUBSAMPLE_PER_BIN
        for _ in range(64):
            if np.all(counts >= target):
                break
            ii = rng.integers(0, n, 200_000)
            jj = rng.integers(0, n, 200_000)
            keep = ii != jj
            ii, jj = ii[keep], jj[keep]
            dist = np.abs(t_flat[ii] - t_flat[jj]) + np.linalg.norm(
                x_flat[ii] - x_flat[jj], axis=1
            )
            which = np.clip(np.searchsorted(edges, dist) - 1, 0, _SUBSAMPLE_BINS - 1)
            sel = counts[which] < target
            np.add.at(counts, which[sel], 1)
            ii, jj, dist = ii[sel], jj[sel], dist[sel]
            ratio = np.abs(v[ii] - v[jj]) / dist**rho
            if len(ratio):
                a = int(np.argmax(ratio))
                if ratio[a] > best:
                    best = float(ratio[a])
                    best_pair = (int(ii[a]), int(jj[a]))

    i, j = best_pair
    report = HolderReport(
        rho=rho,
        sup_term=sup_term,
        seminorm_term=max(best, 0.0),
        norm=sup_term + max(best, 0.0),
        argmax_pair=(
            (float(t_flat[i]), tuple(x_flat[i])),
            (float(t_flat[j]), tuple(x_flat[j])),
        ),
        subsampled=subsampled,
    )
    return report


def holder_distance(f1: FieldSample, f2: FieldSample, rho: float,
                    t0: Optional[float] = None) -> float:
    """Holder norm of the pointwise difference; grids must match exactly."""
    if f1.values.shape != f2.values.shape or not np.array_equal(
        f1.eval_points, f2.eval_points
    ) or f1.grid.num_steps != f2.grid.num_steps or f1.grid.T != f2.grid.T:
        raise ValueError("holder_distance needs identical grids")
    diff = FieldSample(
        grid=f1.grid, t0=f1.t0, values=f1.values - f2.values,
        eval_points=f1.eval_points, meta={"variant": "difference"},
    )
    return holder_norm(diff, rho, t0=t0).norm


def modulus_of_continuity(fieldsample: FieldSample, rho_prime: float,
                          delta_grid: Sequence[float], t0: Optional[float] = None) -> tuple:
    """O_g(delta): sup of the rho'-ratio over pairs closer than each delta."""
    if not 0.0 < rho_prime < 1.0:
        raise ValueError(f"rho_prime must lie in (0, 1), got {rho_prime}")
    t0 = fieldsample.t0 if t0 is None else float(t0)
    t_flat, x_flat, v = _flatten(fieldsample, t0)
    n = len(v)
    deltas = np.asarray(sorted(delta_grid), dtype=float)
    best = np.zeros(len(deltas))
    for i0, i1, j0, j1 in _pair_blocks(n):
        dt = np.abs(t_flat[i0:i1, None] - t_flat[None, j0:j1])
        dx = np.linalg.norm(x_flat[i0:i1, None, :] - x_flat[None, j0:j1, :], axis=2)
        dist = dt + dx
        dv = np.abs(v[i0:i1, None] - v[None, j0:j1])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dist > 0, dv / dist**rho_prime, -np.inf)
        for a, delta in enumerate(deltas):
            mask = (dist > 0) & (dist < delta)
            if np.any(mask):
                best[a] = max(best[a], float(np.max(np.where(mask, ratio, -np.inf))))
    return tuple((float(d), float(b)) for d, b in zip(deltas, best))


def fit_increment_exponent(ensemble: Sequence[FieldSample], direction: str, p: float,
                           t0: Optional[float] = None, min_scale: float = 0.0,
                           max_scale: float = np.inf) -> ExponentEstimate:
    """Fitted increment exponent rho-hat = slope / p over an ensemble.

    direction="space" pools pairs of evaluation points at equal times;
    direction="time" pools pairs of times at equal points.  Scales outside
    [min_scale, max_scale] are dropped (sub-lattice separations measure
    the interpolant, not the field).
    """
    if direction not in ("space", "time"):
        raise ValueError(f"direction must be 'space' or 'time', got {direction!r}")
    if len(ensemble) < 100:
        raise ValueError(f"need an ensemble of >= 100 fields, got {len(ensemble)}")
    f0 = ensemble[0]
    t0 = f0.t0 if t0 is None else float(t0)
    keep = f0.times >= t0 - 1e-12
    vals = np.stack([f.values[keep] for f in ensemble])  # (R, K, E)

    groups: dict[float, list] = {}
    if direction == "space":
        pts = f0.eval_points
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                d = float(np.linalg.norm(pts[i] - pts[j]))
                if min_scale - 1e-12 <= d <= max_scale + 1e-12:
                    groups.setdefault(round(d, 9), []).append((i, j))
        moments = {
            d: float(np.mean(np.abs(vals[:, :, [i for i, _ in prs]]
                                    - vals[:, :, [j for _, j in prs]]) ** p))
            for d, prs in groups.items()
        }
    else:
        tt = f0.times[keep]
        for i in range(len(tt)):
            for j in range(i + 1, len(tt)):
                d = float(tt[j] - tt[i])
                if min_scale - 1e-12 <= d <= max_scale + 1e-12:
                    groups.setdefault(round(d, 9), []).append((i, j))
        moments = {
            d: float(np.mean(np.abs(vals[:, [i for i, _ in prs], :]
                                    - vals[:, [j for _, j in prs], :]) ** p))
            for d, prs in groups.items()
        }

    scales = sorted(moments)
    if len(scales) < 4:
        raise ValueError(f"insufficient separation scales ({len(scales)} < 4)")
    values = [moments[s] for s in scales]
    ls = np.log(scales)
    lv = np.log(np.maximum(values, 1e-300))
    slope, intercept = np.polyfit(ls, lv, 1)
    resid = lv - (slope * ls + intercept)
    ss = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 if ss == 0 else max(0.0, 1.0 - float(np.sum(resid**2)) / ss)
    return ExponentEstimate(
        exponent=float(slope / p),
        intercept=float(intercept),
        r_squared=min(r2, 1.0),
        sample_points=tuple(zip(scales, values)),
    )
