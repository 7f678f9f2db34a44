"""Sampling of the correlated space-time noise and its smoothings.

The driving field is white in time and spatially correlated by the kernel
f.  On a finite lattice the time-slab increments are centered Gaussian
vectors with covariance dt * Sigma, Sigma_ij = f(y_i - y_j) with a
regularized diagonal.  The abstract orthonormal basis of the noise Hilbert
space is stood in for by the eigenvectors of Sigma ordered by decreasing
eigenvalue; writing e_hat_j for the unit eigenvectors, the slab increment
decomposes as

    M_m = sum_j sqrt(lambda_j) e_hat_j W_j(Delta_m),

with W_j independent standard Brownian increments.  Everything downstream
(dyadic piecewise-constant smoothings, localization events, Cameron-Martin
shifts) acts on the standard coordinates W_j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .kernels import CovarianceSpec, eval_kernel_radial

__all__ = [
    "ALPHA_MIN",
    "AlignmentError",
    "ControlH",
    "DegenerateCovarianceError",
    "NoiseGrid",
    "NoiseModel",
    "NoisePath",
    "ParameterError",
    "SmoothedNoise",
    "build_smoothed",
    "cubic_lattice",
    "derive_seed",
    "dyadic_increments",
    "girsanov_shift",
    "ht_norm",
    "localization_indicator",
    "localization_probability",
    "sample_noise",
    "slice_ht_norm",
]

ALPHA_MIN = math.sqrt(2.0 * math.log(2.0))


class DegenerateCovarianceError(RuntimeError):
    """Covariance factorization failed even after jitter."""


class AlignmentError(ValueError):
    """Dyadic intervals do not align with the simulation time grid."""


class ParameterError(ValueError):
    """A parameter violates its admissible range."""


@dataclass(frozen=True)
class NoiseGrid:
    """Space-time sampling grid: uniform time steps and a cubic lattice."""

    T: float
    num_steps: int
    lattice: np.ndarray  # (L, 3) sites, row-major over a regular axis grid
    spacing: float

    def __post_init__(self):
        if self.T <= 0 or self.num_steps < 1 or self.spacing <= 0:
            raise ParameterError("need T > 0, num_steps >= 1, spacing > 0")
        if len(self.lattice) == 0:
            raise ParameterError("lattice must be nonempty")

    @property
    def dt(self) -> float:
        return self.T / self.num_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.num_steps + 1)

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Recover the per-axis coordinates; raises if not a regular grid."""
        ax = [np.unique(self.lattice[:, d]) for d in range(3)]
        expect = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1).reshape(-1, 3)
        if expect.shape != self.lattice.shape or not np.allclose(expect, self.lattice):
            raise ParameterError("lattice is not a row-major regular axis grid")
        for a in ax:
            if len(a) > 1 and not np.allclose(np.diff(a), self.spacing, rtol=1e-9):
                raise ParameterError("lattice spacing is not uniform")
        return ax[0], ax[1], ax[2]

    def covers(self, points, radius: float) -> bool:
        """True if every ball B(p, radius) lies inside the lattice bounding box."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        lo = self.lattice.min(axis=0)
        hi = self.lattice.max(axis=0)
        return bool(
            np.all(points - radius >= lo - 1e-9) and np.all(points + radius <= hi + 1e-9)
        )


def cubic_lattice(center, half_extent: float, n_per_axis: int) -> tuple[np.ndarray, float]:
    """A cubic n^3 lattice on [center - half, center + half]^3; returns (sites, spacing)."""
    if n_per_axis < 2:
        raise ParameterError("need at least 2 sites per axis")
    center = np.asarray(center, dtype=float)
    ax = [np.linspace(c - half_extent, c + half_extent, n_per_axis) for c in center]
    sites = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1).reshape(-1, 3)
    spacing = 2.0 * half_extent / (n_per_axis - 1)
    return sites, spacing


def derive_seed(base_seed: int, replica: int) -> int:
    """Replica seed stream: (base, replica) through numpy's seed splitter."""
    return int(np.random.SeedSequence((base_seed, replica)).generate_state(1, np.uint64)[0])


class NoiseModel:
    """Factorized lattice covariance for repeated sampling.

    Holds the eigendecomposition Sigma = E diag(lambda) E^T of the site
    covariance (jittered by 1e-10 * trace on failure) and the derived
    synthesis factor.  ``num_modes`` top eigenpairs form the finite basis
    used by smoothings and shifts.
    """

    def __init__(self, spec: CovarianceSpec, grid: NoiseGrid, num_modes: int):
        if num_modes < 1 or num_modes > len(grid.lattice):
            raise ParameterError(f"num_modes must be in [1, {len(grid.lattice)}]")
        self.spec = spec
        self.grid = grid
        self.num_modes = num_modes

        d = np.linalg.norm(grid.lattice[:, None, :] - grid.lattice[None, :, :], axis=2)
        sigma = eval_kernel_radial(spec, d)
        lam, vec = np.linalg.eigh(sigma)
        tol = 1e-12 * max(lam.max(), 1.0)
        if lam.min() < -1e-10 * np.trace(sigma):
            sigma = sigma + 1e-10 * np.trace(sigma) * np.eye(len(sigma))
            lam, vec = np.linalg.eigh(sigma)
            if lam.min() < -1e-10 * np.trace(sigma):
                raise DegenerateCovarianceError(
                    f"covariance not PSD after jitter (min eigenvalue {lam.min():.3e})"
                )
        lam = np.clip(lam, 0.0, None)
        order = np.argsort(lam)[::-1]
        self.eigvals_full = lam[order]
        self.eigvecs_full = np.ascontiguousarray(vec[:, order])  # columns e_hat_j
        if self.eigvals_full[num_modes - 1] <= tol:
            raise DegenerateCovarianceError(
                f"requested {num_modes} modes but covariance rank is lower"
            )
        # fix a sign convention so the basis is reproducible across runs
        signs = np.sign(self.eigvecs_full[np.argmax(np.abs(self.eigvecs_full), axis=0),
                                          np.arange(len(lam))])
        signs[signs == 0] = 1.0
        self.eigvecs_full *= signs
        self._factor = self.eigvecs_full * np.sqrt(self.eigvals_full)

    @property
    def eigvals(self) -> np.ndarray:
        return self.eigvals_full[: self.num_modes]

    @property
    def eigvecs(self) -> np.ndarray:
        """Unit eigenvectors e_hat_j as rows, top num_modes."""
        return self.eigvecs_full[:, : self.num_modes].T

    def sample(self, seed: int) -> "NoisePath":
        """Draw one path: increments ~ N(0, dt * Sigma) per slab, iid over slabs."""
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((len(self.grid.lattice), self.grid.num_steps))
        sqrt_dt = math.sqrt(self.grid.dt)
        increments = np.ascontiguousarray((self._factor @ z).T * sqrt_dt)
        mode_increments = np.ascontiguousarray(z[: self.num_modes] * sqrt_dt)
        dv = self.grid.spacing**3
        eigenbasis = self.eigvecs / math.sqrt(dv)  # orthonormal under lattice weights
        return NoisePath(
            grid=self.grid,
            increments=increments,
            mode_increments=mode_increments,
            eigenbasis=eigenbasis,
            eigvals=self.eigvals.copy(),
            seed=int(seed),
        )


@dataclass(frozen=True)
class NoisePath:
    """One realization of the lattice noise and its finite mode decomposition.

    increments[m, i] is the slab-m increment of the field at site i;
    mode_increments[j, m] is the standard Brownian increment W_j(slab m).
    eigenbasis rows are orthonormal w.r.t. the lattice quadrature weight
    spacing**3; the physical unit eigenvectors are eigenbasis * sqrt(weight).
    """

    grid: NoiseGrid
    increments: np.ndarray        # (num_steps, L)
    mode_increments: np.ndarray   # (num_modes, num_steps)
    eigenbasis: np.ndarray        # (num_modes, L)
    eigvals: np.ndarray           # (num_modes,)
    seed: int

    @property
    def num_modes(self) -> int:
        return self.mode_increments.shape[0]

    def unit_eigvecs(self) -> np.ndarray:
        """Rows e_hat_j with plain Euclidean unit norm."""
        return self.eigenbasis * math.sqrt(self.grid.spacing**3)

    def mode_fields(self) -> np.ndarray:
        """Rows sqrt(lambda_j) e_hat_j: the lattice fields carried by each mode."""
        return self.unit_eigvecs() * np.sqrt(self.eigvals)[:, None]


def sample_noise(spec: CovarianceSpec, grid: NoiseGrid, num_modes: int, seed: int) -> NoisePath:
    """One-shot sampling; build a NoiseModel directly for replica ensembles."""
    return NoiseModel(spec, grid, num_modes).sample(seed)


def dyadic_increments(path: NoisePath, n: int) -> np.ndarray:
    """W_j(Delta_i) on the 2^n dyadic partition, shape (num_modes, 2^n)."""
    steps = path.grid.num_steps
    if n < 1:
        raise ParameterError("dyadic level must be >= 1")
    if steps % (1 << n):
        raise AlignmentError(f"2^{n} dyadic intervals do not divide {steps} steps")
    block = steps >> n
    return path.mode_increments.reshape(path.num_modes, 1 << n, block).sum(axis=2)


@dataclass(frozen=True)
class SmoothedNoise:
    """Level-n piecewise-constant derivative approximation of the noise.

    slopes[j, i] is the slope of mode j+1 on dyadic interval i; interval 0
    carries the one-interval delay (slope 0), interval i+1 carries
    2^n/T * W_j(Delta_i), and modes beyond n contribute nothing.
    """

    level: int
    slopes: np.ndarray  # (level, 2^level)
    T: float

    def slopes_on_grid(self, num_steps: int) -> np.ndarray:
        """Expand to the uniform grid as left-point slab values, (level, num_steps)."""
        if num_steps % (1 << self.level):
            raise AlignmentError("grid does not align with the dyadic partition")
        return np.repeat(self.slopes, num_steps >> self.level, axis=1)


def build_smoothed(path: NoisePath, n: int) -> SmoothedNoise:
    """The dyadic smoothing: delayed piecewise-constant slopes from W_j(Delta_i)."""
    if n < 1 or n > path.num_modes:
        raise ParameterError(f"level n={n} needs 1 <= n <= num_modes={path.num_modes}")
    w = dyadic_increments(path, n)[:n]  # (n, 2^n)
    slopes = np.zeros_like(w)
    slopes[:, 1:] = (1 << n) / path.grid.T * w[:, :-1]
    return SmoothedNoise(level=n, slopes=slopes, T=path.grid.T)


@dataclass(frozen=True)
class ControlH:
    """A Cameron-Martin control: piecewise-constant mode coefficients h_j(t)."""

    mode_coefficients: np.ndarray  # (num_modes_h, num_steps), left-point slab values
    T: float

    @property
    def squared_norm(self) -> float:
        dt = self.T / self.mode_coefficients.shape[1]
        return float(np.sum(self.mode_coefficients**2) * dt)

    @classmethod
    def zero(cls, num_modes: int, num_steps: int, T: float) -> "ControlH":
        return cls(mode_coefficients=np.zeros((num_modes, num_steps)), T=T)

    @classmethod
    def from_smoothed(cls, wn: SmoothedNoise, num_steps: int) -> "ControlH":
        return cls(mode_coefficients=wn.slopes_on_grid(num_steps), T=wn.T)


def localization_indicator(path: NoisePath, n: int, t: float, alpha: float) -> bool:
    """The event that all dyadic increments up to time t stay under the threshold.

    Checks sup over modes 1..n and intervals 0..ceil(2^n t / T - 1)+ of
    |W_j(Delta_i)| against alpha * n^(1/2) * 2^(-n/2).
    """
    if alpha <= ALPHA_MIN:
        raise ParameterError(f"alpha must exceed sqrt(2 ln 2) ~ {ALPHA_MIN:.4f}")
    if not 0.0 <= t <= path.grid.T:
        raise ParameterError(f"t={t} outside [0, T]")
    w = dyadic_increments(path, n)[:n]
    i_max = max(math.ceil((1 << n) * t / path.grid.T - 1.0), 0)
    i_max = min(i_max, (1 << n) - 1)
    threshold = alpha * math.sqrt(n) * 2.0 ** (-n / 2.0)
    return bool(np.max(np.abs(w[:, : i_max + 1])) <= threshold)


def localization_probability(n: int, t: float, T: float, alpha: float) -> float:
    """Closed-form P(L_n(t)): a product of centered Gaussian interval masses."""
    from scipy.stats import norm

    if alpha <= ALPHA_MIN:
        raise ParameterError(f"alpha must exceed sqrt(2 ln 2) ~ {ALPHA_MIN:.4f}")
    i_max = max(math.ceil((1 << n) * t / T - 1.0), 0)
    i_max = min(i_max, (1 << n) - 1)
    count = n * (i_max + 1)
    # |W(Delta)| <= alpha sqrt(n) 2^(-n/2) with sd sqrt(T 2^-n)
    ratio = alpha * math.sqrt(n) * 2.0 ** (-n / 2.0) / math.sqrt(T * 2.0 ** (-n))
    per = 2.0 * norm.cdf(ratio) - 1.0
    return float(per**count)


def girsanov_shift(path: NoisePath, h: ControlH, n: int) -> NoisePath:
    """Shift the path by the control minus the level-n smoothing.

    Mode increments gain integral over each slab of (h_j - wdot_j^n); the
    lattice increments are re-synthesized from the shifted modes, leaving
    the component orthogonal to the retained modes untouched.
    """
    steps = path.grid.num_steps
    dt = path.grid.dt
    wn = build_smoothed(path, n)
    delta = np.zeros((path.num_modes, steps))
    hc = h.mode_coefficients
    delta[: hc.shape[0]] += hc[: path.num_modes]
    delta[: wn.level] -= wn.slopes_on_grid(steps)
    delta *= dt
    new_modes = path.mode_increments + delta
    new_incr = path.increments + delta.T @ path.mode_fields()
    return replace(
        path,
        increments=np.ascontiguousarray(new_incr),
        mode_increments=np.ascontiguousarray(new_modes),
    )


def _slope_profile(obj: SmoothedNoise | ControlH, num_steps: Optional[int] = None):
    """(coefficient array on a uniform grid, T, dt)."""
    if isinstance(obj, SmoothedNoise):
        steps = num_steps if num_steps is not None else (1 << obj.level)
        return obj.slopes_on_grid(steps), obj.T, obj.T / steps
    coeffs = obj.mode_coefficients
    return coeffs, obj.T, obj.T / coeffs.shape[1]


def ht_norm(obj: SmoothedNoise | ControlH, interval: Optional[tuple[float, float]] = None,
            localized: Optional[tuple[int, float, NoisePath]] = None) -> Optional[float]:
    """The L^2([0,T]; H) norm of the restriction to ``interval``.

    In standard mode coordinates the norm is the time integral of the
    squared coefficient vector; piecewise constancy makes the partial-slab
    contributions exact.  With ``localized=(n, alpha, path)`` the value is
    only reported when the localization event holds (None otherwise).
    """
    coeffs, T, dt = _slope_profile(obj)
    a, b = interval if interval is not None else (0.0, T)
    if not 0.0 <= a <= b <= T:
        raise ParameterError(f"interval [{a}, {b}] not inside [0, {T}]")
    if localized is not None:
        n, alpha, path = localized
        if not localization_indicator(path, n, b, alpha):
            return None
    steps = coeffs.shape[1]
    edges = np.linspace(0.0, T, steps + 1)
    overlap = np.clip(np.minimum(edges[1:], b) - np.maximum(edges[:-1], a), 0.0, None)
    return float(np.sqrt(np.sum(coeffs**2 * overlap[None, :])))


def slice_ht_norm(obj: SmoothedNoise | ControlH, t: float) -> float:
    """The instantaneous H-norm of the spatial slice at time t."""
    coeffs, T, dt = _slope_profile(obj)
    if not 0.0 <= t <= T:
        raise ParameterError(f"t={t} outside [0, {T}]")
    idx = min(int(t / dt), coeffs.shape[1] - 1)
    return float(np.linalg.norm(coeffs[:, idx]))
