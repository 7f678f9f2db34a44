"""Causal integration of the mild-form wave equations.

The value at (t_k, x) is assembled from the Kirchhoff initial-condition
wave, the stochastic convolution against the lattice noise increments,
the pathwise pairings against the smoothed noise and the Cameron-Martin
control, and the drift.  All four terms share one quadrature: the Green
measure G(t_k - t_m) around x is realized by sphere nodes, every lattice
field (past solution, noise increment, effective smoothed-noise and
control fields) is read at the nodes by trilinear interpolation, and the
time rule is the left-point (Ito-consistent) rectangle rule.

The pairings against the smoothed noise w^n and the control h reduce to
the same node sums because a mode-space element sum_j c_j(t) e_j pairs
with a measure exactly like the lattice field  dt * sum_j c_j
sqrt(lambda_j) e_hat_j; those effective fields are precomputed per slab.

The explicit scheme marches causally; the Picard scheme iterates the same
assembly map from the initial-condition wave and serves as an
order-independent cross-check of the recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from ._core import backend_name, get_backend
from .noise import (
    AlignmentError,
    ControlH,
    NoiseGrid,
    NoiseModel,
    NoisePath,
    ParameterError,
    SmoothedNoise,
    build_smoothed,
)
from .wavekernel import InitialData, SphereQuadrature, kirchhoff_ic_many, sphere_nodes

__all__ = [
    "BlowUpError",
    "Coefficient",
    "EquationSpec",
    "FieldSample",
    "SolverConfig",
    "VariantError",
    "coeff_affine",
    "coeff_const",
    "coeff_custom",
    "coeff_sin",
    "coeff_zero",
    "dyadic_delay",
    "interp_at",
    "picard_solve",
    "solve_mild",
    "solve_shifted",
    "solve_skeleton",
    "validate_lipschitz",
]

_KINDS = {"zero": 0, "const": 1, "affine": 2, "sin": 3, "custom": 4}


class BlowUpError(RuntimeError):
    """A non-finite field value appeared; carries the first offending (t, x)."""

    def __init__(self, t: float, x):
        self.t = float(t)
        self.x = np.asarray(x, dtype=float)
        super().__init__(f"field blew up at t={t:.6g}, x={np.round(self.x, 4)}")


class VariantError(ValueError):
    """Arguments inconsistent with the equation variant."""


@dataclass(frozen=True)
class Coefficient:
    """A scalar coefficient function with a declared Lipschitz constant.

    Registry kinds (zero / const / affine: a + b*u / sin: a + b*sin(c*u))
    are evaluable inside the compiled kernel; ``custom`` holds an arbitrary
    vectorized callable and forces the python backend.
    """

    kind: str = "zero"
    a: float = 0.0
    b: float = 0.0
    c: float = 1.0
    fn: Optional[Callable] = None
    lipschitz_const: Optional[float] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        if self.kind == "custom" and (self.fn is None or self.lipschitz_const is None):
            raise ValueError("custom coefficients need fn and a declared lipschitz_const")

    def __call__(self, u):
        if self.kind == "zero":
            return np.zeros_like(u) if isinstance(u, np.ndarray) else 0.0
        if self.kind == "const":
            return np.full_like(u, self.a) if isinstance(u, np.ndarray) else self.a
        if self.kind == "affine":
            return self.a + self.b * u
        if self.kind == "sin":
            return self.a + self.b * np.sin(self.c * u)
        return self.fn(u)

    @property
    def lipschitz(self) -> float:
        if self.lipschitz_const is not None:
            return self.lipschitz_const
        if self.kind in ("zero", "const"):
            return 0.0
        if self.kind == "affine":
            return abs(self.b)
        return abs(self.b * self.c)

    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind in ("const", "affine", "sin")
                                       and self.a == 0.0 and self.b == 0.0)

    def negated(self) -> "Coefficient":
        if self.kind == "custom":
            f = self.fn
            return Coefficient(kind="custom", fn=lambda u: -f(u),
                               lipschitz_const=self.lipschitz_const)
        return replace(self, a=-self.a, b=-self.b)


def coeff_zero() -> Coefficient:
    return Coefficient(kind="zero")


def coeff_const(a: float) -> Coefficient:
    return Coefficient(kind="const", a=a)


def coeff_affine(a: float, b: float) -> Coefficient:
    return Coefficient(kind="affine", a=a, b=b)


def coeff_sin(a: float, b: float, c: float = 1.0) -> Coefficient:
    return Coefficient(kind="sin", a=a, b=b, c=c)


def coeff_custom(fn: Callable, lipschitz_const: float) -> Coefficient:
    return Coefficient(kind="custom", fn=fn, lipschitz_const=lipschitz_const)


def _coeff_sum(x: Coefficient, y: Coefficient) -> Coefficient:
    """x + y, staying inside the registry when possible."""
    if x.is_zero():
        return y
    if y.is_zero():
        return x
    if x.kind in ("const", "affine") and y.kind in ("const", "affine"):
        return Coefficient(kind="affine", a=x.a + y.a, b=x.b + y.b)
    if x.kind == "sin" and y.kind == "const":
        return replace(x, a=x.a + y.a)
    if x.kind == "const" and y.kind == "sin":
        return replace(y, a=x.a + y.a)
    lip = x.lipschitz + y.lipschitz
    return Coefficient(kind="custom", fn=lambda u: x(u) + y(u), lipschitz_const=lip)


_VARIANTS = ("base", "reference", "full", "delayed_n", "delayed_ref", "skeleton", "shifted")


@dataclass(frozen=True)
class EquationSpec:
    """Coefficients (A, B, D, b) and the equation variant they drive.

    base:        dX = A(X) dM + b dt                      (the plain equation)
    reference:   dM coefficient A+B, control coefficient D (no smoothed noise)
    full:        dM: A, smoothed noise w^n: B, control h: D
    delayed_n /
    delayed_ref: the full / reference assemblies truncated at the dyadic
                 delay t_n (evaluated on the already-solved field)
    skeleton:    deterministic, control coefficient D only
    shifted:     diffusion A against dM and the shifted control h - w^n
    """

    variant: str = "base"
    A: Coefficient = field(default_factory=coeff_zero)
    B: Coefficient = field(default_factory=coeff_zero)
    D: Coefficient = field(default_factory=coeff_zero)
    b: Coefficient = field(default_factory=coeff_zero)

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise VariantError(f"unknown variant {self.variant!r}")


def validate_lipschitz(eq: EquationSpec, n_probes: int = 10_000, box: float = 10.0,
                       seed: int = 0, rtol: float = 1e-9) -> None:
    """Check the declared Lipschitz constants on random probe pairs."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-box, box, n_probes)
    y = rng.uniform(-box, box, n_probes)
    for name in ("A", "B", "D", "b"):
        co: Coefficient = getattr(eq, name)
        if co.is_zero():
            continue
        lhs = np.abs(np.asarray(co(x)) - np.asarray(co(y)))
        rhs = co.lipschitz * np.abs(x - y)
        bad = lhs > rhs * (1 + rtol) + 1e-12
        if np.any(bad):
            i = int(np.argmax(lhs - rhs))
            raise ValueError(
                f"coefficient {name} violates its Lipschitz constant "
                f"{co.lipschitz} at ({x[i]:.4g}, {y[i]:.4g})"
            )


@dataclass(frozen=True)
class SolverConfig:
    """Discretization and scheme choices for one solve."""

    sphere_order: int = 256
    interp: str = "trilinear"
    scheme: str = "explicit"
    picard_tol: float = 1e-8
    picard_max_iter: int = 50
    backend: str = "auto"
    restrict_to_cone: bool = True

    def __post_init__(self):
        if self.interp != "trilinear":
            raise ParameterError(f"unsupported interpolation {self.interp!r}")
        if self.scheme not in ("explicit", "picard"):
            raise ParameterError(f"unknown scheme {self.scheme!r}")
        if self.picard_tol <= 0 or self.picard_max_iter < 1:
            raise ParameterError("need picard_tol > 0 and picard_max_iter >= 1")


@dataclass(frozen=True)
class FieldSample:
    """One realization of the field on (times 0..T) x (evaluation points)."""

    grid: NoiseGrid
    t0: float
    values: np.ndarray       # (num_steps + 1, n_eval), time-major / point-minor
    eval_points: np.ndarray  # (n_eval, 3)
    meta: dict

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            k, e = np.argwhere(~np.isfinite(self.values))[0]
            raise BlowUpError(self.grid.times[k], self.eval_points[e])

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


def dyadic_delay(t: float, n: int, T: float) -> tuple[float, float]:
    """The delayed times (underline_t_n, t_n) on the level-n dyadic grid.

    underline_t_n is the largest k 2^-n T <= t with 1 <= k <= 2^n - 1
    (0 when no such k exists), and t_n backs off one further interval.
    """
    if not 0.0 <= t <= T:
        raise ParameterError(f"t={t} outside [0, {T}]")
    if n < 1:
        raise ParameterError("n must be >= 1")
    step = T / (1 << n)
    k = min(int(math.floor(t / step + 1e-12)), (1 << n) - 1)
    underline = k * step if k >= 1 else 0.0
    t_n = max(underline - step, 0.0)
    return underline, t_n


def interp_at(grid: NoiseGrid, rows: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of lattice rows (.., L) at points (E, 3)."""
    ax0, ax1, ax2 = grid.axes()
    lo = np.array([ax0[0], ax1[0], ax2[0]])
    shape = (len(ax0), len(ax1), len(ax2))
    q = (np.atleast_2d(points) - lo) / grid.spacing
    i = np.floor(q).astype(np.int64)
    np.clip(i, 0, np.array(shape) - 2, out=i)
    f = np.clip(q - i, 0.0, 1.0)
    n1, n2 = shape[1], shape[2]
    s1 = n1 * n2
    base = (i[:, 0] * n1 + i[:, 1]) * n2 + i[:, 2]
    offs = np.array([0, 1, n2, n2 + 1, s1, s1 + 1, s1 + n2, s1 + n2 + 1])
    g0, g1, g2 = 1 - f[:, 0], 1 - f[:, 1], 1 - f[:, 2]
    w8 = np.stack(
        [
            g0 * g1 * g2, g0 * g1 * f[:, 2], g0 * f[:, 1] * g2, g0 * f[:, 1] * f[:, 2],
            f[:, 0] * g1 * g2, f[:, 0] * g1 * f[:, 2], f[:, 0] * f[:, 1] * g2,
            f[:, 0] * f[:, 1] * f[:, 2],
        ],
        axis=-1,
    )
    return np.einsum("...ej,ej->...e", np.asarray(rows)[..., base[:, None] + offs], w8)


class _Plan:
    """Shared precomputation for one solve (geometry, channels, X0)."""

    def __init__(self, eq, grid, basis, path, wn, h, ic, config, eval_points, t0):
        self.eq = eq
        self.grid = grid
        self.config = config
        self.quad: SphereQuadrature = sphere_nodes(config.sphere_order)
        self.eval_points = np.atleast_2d(np.asarray(eval_points, dtype=float))
        self.t0 = float(t0)
        self.backend = get_backend(config.backend)

        ax0, ax1, ax2 = grid.axes()
        self.lo = (float(ax0[0]), float(ax1[0]), float(ax2[0]))
        self.shape = (len(ax0), len(ax1), len(ax2))
        if not grid.covers(self.eval_points, 0.0):
            raise ParameterError("evaluation points leave the lattice hull")

        steps = grid.num_steps
        self.dt = grid.dt

        # channel wiring per variant
        a_m, a_w, a_h = _channel_coeffs(eq)
        self.kinds = np.array(
            [_KINDS[a_m.kind], _KINDS[a_w.kind], _KINDS[a_h.kind], _KINDS[eq.b.kind]],
            dtype=np.int32,
        )
        self.pa = np.array([a_m.a, a_w.a, a_h.a, eq.b.a])
        self.pb = np.array([a_m.b, a_w.b, a_h.b, eq.b.b])
        self.pc = np.array([a_m.c, a_w.c, a_h.c, eq.b.c])
        self.fns = (a_m.fn, a_w.fn, a_h.fn, eq.b.fn)
        self.coeffs = (a_m, a_w, a_h, eq.b)
        if np.any(self.kinds == _KINDS["custom"]) and backend_name(self.backend) == "compiled":
            if config.backend == "compiled":
                raise ParameterError("custom coefficients require the python backend")
            self.backend = get_backend("python")

        empty = np.zeros((0, 0))
        self.M = path.increments if (path is not None and not a_m.is_zero()) else empty
        if wn is not None and not a_w.is_zero():
            slopes = wn.slopes_on_grid(steps)  # raises AlignmentError on mismatch
            fields = _mode_fields(basis, slopes.shape[0])
            self.WN = np.ascontiguousarray(self.dt * slopes.T @ fields)
        else:
            self.WN = empty
        if h is not None and not a_h.is_zero():
            coeffs = h.mode_coefficients
            if coeffs.shape[1] != steps:
                raise AlignmentError(
                    f"control defined on {coeffs.shape[1]} slabs, grid has {steps}"
                )
            fields = _mode_fields(basis, coeffs.shape[0])
            self.HH = np.ascontiguousarray(self.dt * coeffs.T @ fields)
        else:
            self.HH = empty

        # initial-condition wave everywhere (it also seeds inactive cone sites)
        if ic.is_zero():
            self.x0_lattice = np.zeros((steps + 1, len(grid.lattice)))
            self.x0_eval = np.zeros((steps + 1, len(self.eval_points)))
        else:
            self.x0_lattice = kirchhoff_ic_many(ic, grid.times, grid.lattice, self.quad)
            self.x0_eval = kirchhoff_ic_many(ic, grid.times, self.eval_points, self.quad)

        # active-site cones around the evaluation set, inflated past one cell
        # diagonal so output interpolation and node reads stay on seeded sites
        lat = grid.lattice
        if config.restrict_to_cone:
            margin = 1.6 * math.sqrt(3.0) * grid.spacing
            dist = np.min(
                np.linalg.norm(lat[:, None, :] - self.eval_points[None, :, :], axis=2),
                axis=1,
            )
            self.active = [
                np.ascontiguousarray(
                    np.nonzero(dist <= (grid.T - tk) + margin)[0].astype(np.int64)
                )
                for tk in grid.times
            ]
        else:
            everything = np.arange(len(lat), dtype=np.int64)
            self.active = [everything for _ in grid.times]

    def is_state_independent(self) -> bool:
        """True when no coefficient reads the field: the solve is a superposition."""
        return bool(np.all(self.kinds <= _KINDS["const"]))

    def step_contrib(self, X: np.ndarray, k: int, m_lo: int, m_hi: int) -> np.ndarray:
        act = self.active[k]
        out = np.zeros(len(act))
        if m_hi > m_lo:
            args = (
                out, X, self.M, self.WN, self.HH, act, self.grid.lattice,
                self.quad.nodes, k, m_lo, m_hi, self.dt,
                self.lo[0], self.lo[1], self.lo[2], self.grid.spacing,
                self.shape[0], self.shape[1], self.shape[2],
                self.kinds, self.pa, self.pb, self.pc,
            )
            if backend_name(self.backend) == "python":
                self.backend.accumulate_step(*args, fns=self.fns)
            else:
                self.backend.accumulate_step(*args)
        return out

    def finish(self, X: np.ndarray, meta: dict) -> FieldSample:
        values = self.x0_eval + interp_at(self.grid, X - self.x0_lattice, self.eval_points)
        meta = dict(meta)
        meta.setdefault("backend", backend_name(self.backend))
        meta.setdefault("sphere_order", self.config.sphere_order)
        return FieldSample(
            grid=self.grid, t0=self.t0, values=values,
            eval_points=self.eval_points, meta=meta,
        )


def _mode_fields(basis, count: int) -> np.ndarray:
    """Rows sqrt(lambda_j) e_hat_j for the first ``count`` modes of the basis."""
    if basis is None:
        raise VariantError("this variant needs a mode basis (a NoisePath or NoiseModel)")
    if isinstance(basis, NoisePath):
        fields = basis.mode_fields()
    else:
        model: NoiseModel = basis
        fields = model.eigvecs * np.sqrt(model.eigvals)[:, None]
    if count > fields.shape[0]:
        raise ParameterError(f"need {count} modes but the basis holds {fields.shape[0]}")
    return fields[:count]


def _channel_coeffs(eq: EquationSpec) -> tuple[Coefficient, Coefficient, Coefficient]:
    """(dM coefficient, w^n coefficient, control coefficient) for the variant."""
    v = eq.variant
    if v in ("base",):
        return eq.A, coeff_zero(), coeff_zero()
    if v in ("reference", "delayed_ref"):
        return _coeff_sum(eq.A, eq.B), coeff_zero(), eq.D
    if v in ("full", "delayed_n", "shifted"):
        return eq.A, eq.B, eq.D
    if v == "skeleton":
        return coeff_zero(), coeff_zero(), eq.D
    raise VariantError(v)


def _check_variant_args(eq, path, wn, h):
    v = eq.variant
    if v == "skeleton":
        if path is not None or wn is not None:
            raise VariantError("skeleton forbids a noise path and smoothed noise")
        if h is None:
            raise VariantError("skeleton requires a control")
    elif v == "base":
        if wn is not None or h is not None:
            raise VariantError("base variant takes no smoothed noise or control")
        if path is None and not eq.A.is_zero():
            raise VariantError("base variant with nonzero A needs a noise path")
    elif v in ("reference", "delayed_ref"):
        if wn is not None:
            raise VariantError(f"{v} takes no smoothed noise")
        if path is None and not (eq.A.is_zero() and eq.B.is_zero()):
            raise VariantError(f"{v} needs a noise path")
        if h is None and not eq.D.is_zero():
            raise VariantError(f"{v} with nonzero D needs a control")
    elif v in ("full", "delayed_n", "shifted"):
        if path is None and not eq.A.is_zero():
            raise VariantError(f"{v} with nonzero A needs a noise path")
        if wn is None and not eq.B.is_zero():
            raise VariantError(f"{v} with nonzero B needs the smoothed noise")
        if h is None and not eq.D.is_zero():
            raise VariantError(f"{v} with nonzero D needs a control")


_GREEN_CACHE: dict = {}
_GREEN_CACHE_MAX = 8


def _green_matrices(plan: _Plan) -> np.ndarray:
    """G[r-1, e, :]: lattice projection of the radius-r*dt Green measure at eval e.

    The projection is the adjoint of trilinear interpolation, so pairing
    G with a lattice field row reproduces the kernel's node sums exactly
    (up to summation order).  Cached per (grid, quadrature, eval set).
    """
    grid, quad, pts = plan.grid, plan.quad, plan.eval_points
    key = (
        id(grid.lattice), grid.num_steps, grid.T, quad.order,
        hash(pts.tobytes()),
    )
    hit = _GREEN_CACHE.get(key)
    if hit is not None:
        return hit
    n0, n1, n2 = plan.shape
    lo = np.array(plan.lo)
    n_lat = len(grid.lattice)
    steps = grid.num_steps
    G = np.zeros((steps, len(pts), n_lat))
    offs = np.array([0, 1, n2, n2 + 1, n1 * n2, n1 * n2 + 1, n1 * n2 + n2, n1 * n2 + n2 + 1])
    for ridx in range(1, steps + 1):
        r = ridx * plan.dt
        p = pts[:, None, :] - r * quad.nodes[None, :, :]
        q = (p - lo) * (1.0 / grid.spacing)
        i = np.floor(q).astype(np.int64)
        np.clip(i, 0, np.array([n0 - 2, n1 - 2, n2 - 2]), out=i)
        f = np.clip(q - i, 0.0, 1.0)
        base = (i[..., 0] * n1 + i[..., 1]) * n2 + i[..., 2]
        g0, g1, g2 = 1 - f[..., 0], 1 - f[..., 1], 1 - f[..., 2]
        w8 = np.stack(
            [
                g0 * g1 * g2, g0 * g1 * f[..., 2], g0 * f[..., 1] * g2,
                g0 * f[..., 1] * f[..., 2], f[..., 0] * g1 * g2,
                f[..., 0] * g1 * f[..., 2], f[..., 0] * f[..., 1] * g2,
                f[..., 0] * f[..., 1] * f[..., 2],
            ],
            axis=-1,
        ) * (r / quad.order)
        flat_idx = (base[..., None] + offs).reshape(len(pts), -1)
        for e in range(len(pts)):
            np.add.at(G[ridx - 1, e], flat_idx[e], w8[e].reshape(-1))
    if len(_GREEN_CACHE) >= _GREEN_CACHE_MAX:
        _GREEN_CACHE.clear()
    _GREEN_CACHE[key] = G
    return G


def _superposition_sweep(plan: _Plan, n_level: Optional[int]) -> np.ndarray:
    """Exact evaluation for state-independent coefficients.

    With constant coefficients the causal recursion collapses to the
    superposition  X(t_k, e) = X0 + sum_m <G_(k-m), channels_m>; this is
    the same arithmetic as the stepper kernel reorganized per summand.
    Returns the (times, eval) value array directly.
    """
    grid = plan.grid
    steps = grid.num_steps
    G = _green_matrices(plan)
    values = plan.x0_eval.copy()
    cA, cB, cD, cb = plan.coeffs
    delayed = plan.eq.variant in ("delayed_n", "delayed_ref")

    # P[r-1, e, m] = <G_r(e), channel_m>
    chans = []
    for co, rows in ((cA, plan.M), (cB, plan.WN), (cD, plan.HH)):
        if rows is not None and len(rows) and not co.is_zero():
            chans.append(float(co.a) * np.einsum("rel,ml->rem", G, rows))
    for k in range(1, steps + 1):
        m_hi = _delay_slab_index(plan, n_level, k) if delayed else k
        if m_hi <= 0:
            continue
        ms = np.arange(m_hi)
        for P in chans:
            values[k] += P[k - 1 - ms, :, ms].sum(axis=0)
        if not cb.is_zero():
            # drift: sum_m b * mass(r) * dt with mass (k - m) dt
            values[k] += float(cb.a) * plan.dt * np.sum((k - ms) * plan.dt)
    return values


def _explicit_sweep(plan: _Plan) -> np.ndarray:
    grid = plan.grid
    X = plan.x0_lattice.copy()
    for k in range(1, grid.num_steps + 1):
        act = plan.active[k]
        contrib = plan.step_contrib(X, k, 0, k)
        X[k, act] = plan.x0_lattice[k, act] + contrib
        if not np.all(np.isfinite(X[k, act])):
            bad = act[int(np.argmax(~np.isfinite(X[k, act])))]
            raise BlowUpError(grid.times[k], grid.lattice[bad])
    return X


def _delay_slab_index(plan: _Plan, n_level: int, k: int) -> int:
    _, t_n = dyadic_delay(plan.grid.times[k], n_level, plan.grid.T)
    return int(round(t_n / plan.dt))


def _delayed_assembly(plan: _Plan, X: np.ndarray, n_level: int) -> np.ndarray:
    out = plan.x0_lattice.copy()
    for k in range(1, plan.grid.num_steps + 1):
        act = plan.active[k]
        m_hi = _delay_slab_index(plan, n_level, k)
        out[k, act] += plan.step_contrib(X, k, 0, m_hi)
    return out


def solve_mild(
    eq: EquationSpec,
    path: Optional[NoisePath] = None,
    wn: Optional[SmoothedNoise] = None,
    h: Optional[ControlH] = None,
    ic: Optional[InitialData] = None,
    config: Optional[SolverConfig] = None,
    eval_points=None,
    t0: float = 0.0,
    grid: Optional[NoiseGrid] = None,
    basis=None,
    n_level: Optional[int] = None,
    meta: Optional[dict] = None,
) -> FieldSample:
    """Integrate one mild-form equation on its space-time grid.

    ``grid``/``basis`` default to the ones carried by ``path``;
    deterministic variants must pass them explicitly.  ``n_level`` selects
    the dyadic delay for the delayed variants.  Evaluation points default
    to the lattice itself.
    """
    from .wavekernel import zero_initial_data

    config = config or SolverConfig()
    ic = ic or zero_initial_data()
    _check_variant_args(eq, path, wn, h)
    if grid is None:
        grid = path.grid if path is not None else None
    if grid is None:
        raise VariantError("no grid: pass a noise path or an explicit grid")
    if basis is None:
        basis = path
    if eval_points is None:
        eval_points = grid.lattice
    if eq.variant in ("delayed_n", "delayed_ref") and n_level is None:
        raise VariantError("delayed variants need n_level")

    plan = _Plan(eq, grid, basis, path, wn, h, ic, config, eval_points, t0)
    if config.scheme == "picard":
        sample, _, _ = _picard_iterate(plan, meta or {})
        return sample

    base_meta = {"variant": eq.variant, "scheme": config.scheme,
                 "seed": getattr(path, "seed", None), "n_level": n_level}
    base_meta.update(meta or {})

    small_enough = grid.num_steps * len(plan.eval_points) * len(grid.lattice) <= 12_000_000
    if plan.is_state_independent() and small_enough:
        values = _superposition_sweep(plan, n_level)
        base_meta.setdefault("fast_path", "superposition")
        return FieldSample(grid=grid, t0=t0, values=values,
                           eval_points=plan.eval_points, meta=base_meta)

    X = _explicit_sweep(plan)
    if eq.variant in ("delayed_n", "delayed_ref"):
        X = _delayed_assembly(plan, X, n_level)
    return plan.finish(X, base_meta)


def solve_skeleton(eq: EquationSpec, h: ControlH, ic, config: SolverConfig,
                   model: NoiseModel, eval_points=None, t0: float = 0.0,
                   meta: Optional[dict] = None) -> FieldSample:
    """The deterministic skeleton driven by the control h; consumes no RNG."""
    if eq.variant != "skeleton":
        raise VariantError(f"expected skeleton variant, got {eq.variant!r}")
    return solve_mild(eq, path=None, wn=None, h=h, ic=ic, config=config,
                      eval_points=eval_points, t0=t0, grid=model.grid, basis=model,
                      meta=meta)


def solve_shifted(eq: EquationSpec, path: NoisePath, h: ControlH, n: int,
                  ic=None, config: Optional[SolverConfig] = None, eval_points=None,
                  t0: float = 0.0, meta: Optional[dict] = None) -> FieldSample:
    """The field after the Girsanov shift: diffusion A against dM and h - w^n.

    Equivalent to the full variant with coefficients (A, -A, A): the dM,
    smoothed-noise and control channels then realize
    A(X) dM + <A(X), h - w^n>.
    """
    if eq.variant != "shifted":
        raise VariantError(f"expected shifted variant, got {eq.variant!r}")
    eq_full = EquationSpec(variant="full", A=eq.A, B=eq.A.negated(), D=eq.A, b=eq.b)
    wn = build_smoothed(path, n)
    sample = solve_mild(eq_full, path=path, wn=wn, h=h, ic=ic, config=config,
                        eval_points=eval_points, t0=t0,
                        meta={**(meta or {}), "variant": "shifted", "n_level": n})
    return sample


def picard_solve(
    eq: EquationSpec,
    path: Optional[NoisePath] = None,
    wn: Optional[SmoothedNoise] = None,
    h: Optional[ControlH] = None,
    ic=None,
    config: Optional[SolverConfig] = None,
    eval_points=None,
    t0: float = 0.0,
    grid: Optional[NoiseGrid] = None,
    basis=None,
) -> tuple[FieldSample, int, float]:
    """Solve by Picard iteration from the initial-condition wave.

    Returns (field, iterations used, final sup-norm update).  Raises an
    iteration-limit error carrying the final delta when the tolerance is
    not met within picard_max_iter sweeps.
    """
    from .wavekernel import zero_initial_data

    config = config or SolverConfig()
    if config.scheme != "picard":
        config = replace(config, scheme="picard")
    ic = ic or zero_initial_data()
    _check_variant_args(eq, path, wn, h)
    if grid is None:
        grid = path.grid if path is not None else None
    if grid is None:
        raise VariantError("no grid: pass a noise path or an explicit grid")
    if basis is None:
        basis = path
    if eval_points is None:
        eval_points = grid.lattice
    plan = _Plan(eq, grid, basis, path, wn, h, ic, config, eval_points, t0)
    return _picard_iterate(plan, {"variant": eq.variant, "scheme": "picard",
                                  "seed": getattr(path, "seed", None)})


class PicardIterationError(RuntimeError):
    def __init__(self, iterations: int, final_delta: float):
        self.iterations = iterations
        self.final_delta = final_delta
        super().__init__(
            f"Picard iteration did not reach tolerance in {iterations} sweeps "
            f"(final delta {final_delta:.3e})"
        )


def _picard_iterate(plan: _Plan, meta: dict) -> tuple[FieldSample, int, float]:
    grid = plan.grid
    Z = plan.x0_lattice.copy()
    delta = math.inf
    for it in range(1, plan.config.picard_max_iter + 1):
        Z_new = plan.x0_lattice.copy()
        for k in range(1, grid.num_steps + 1):
            act = plan.active[k]
            Z_new[k, act] += plan.step_contrib(Z, k, 0, k)
            if not np.all(np.isfinite(Z_new[k, act])):
                bad = act[int(np.argmax(~np.isfinite(Z_new[k, act])))]
                raise BlowUpError(grid.times[k], grid.lattice[bad])
        delta = 0.0
        for k, act in enumerate(plan.active):
            if len(act):
                delta = max(delta, float(np.max(np.abs(Z_new[k, act] - Z[k, act]))))
        Z = Z_new
        if delta < plan.config.picard_tol:
            sample = plan.finish(Z, {**meta, "picard_iterations": it,
                                     "picard_delta": delta})
            return sample, it, delta
    raise PicardIterationError(plan.config.picard_max_iter, delta)
