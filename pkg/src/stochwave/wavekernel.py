"""Actions of the 3D wave fundamental solution G(t).

G(t) is the uniform surface measure on the radius-t sphere scaled by
1/(4 pi t); its total mass is t.  It is always represented here by
quadrature nodes x + t*xi_k with mass weights t*w_k/(4 pi), never by a
density.  The module provides the node sets, the Kirchhoff evaluation of
the initial-condition wave X0, the double-sphere pairing that realizes
the f-weighted inner product of two G measures, and the total mass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .kernels import _FIXED_ROTATION, CovarianceSpec, eval_kernel_radial

__all__ = [
    "InitialData",
    "SphereQuadrature",
    "green_mass",
    "kirchhoff_ic",
    "product_rule",
    "sphere_nodes",
    "sphere_pair_pairing",
    "zero_initial_data",
]

_SUPPORTED_MIN = 16
_SUPPORTED_MAX = 1 << 16


@dataclass(frozen=True)
class SphereQuadrature:
    """Nodes on S^2 with steradian weights summing to 4 pi."""

    nodes: np.ndarray    # (n, 3) unit vectors
    weights: np.ndarray  # (n,) nonnegative, total 4 pi
    degree: int          # spherical-harmonic degree integrated exactly

    @property
    def order(self) -> int:
        return len(self.weights)


def sphere_nodes(order: int) -> SphereQuadrature:
    """Antipodally symmetric golden-spiral node set with equal weights.

    ``order`` must be even and within the supported range.  The set is the
    union of order/2 spiral points and their antipodes, so every odd
    moment vanishes identically (stated degree 1); the z-levels are
    rescaled so the second z-moment is exact as well.
    """
    if order % 2 or not _SUPPORTED_MIN <= order <= _SUPPORTED_MAX:
        raise ValueError(
            f"unsupported order {order}: need an even count in "
            f"[{_SUPPORTED_MIN}, {_SUPPORTED_MAX}]"
        )
    half = order // 2
    i = np.arange(half) + 0.5
    z = 1.0 - i / half  # upper hemisphere levels, midpoint layout
    z = z * np.sqrt(half / 3.0 / np.sum(z**2))  # calibrate sum z^2 = half/3
    phi = 2.0 * np.pi * i / ((1.0 + np.sqrt(5.0)) / 2.0)
    rho = np.sqrt(1.0 - z**2)
    upper = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    nodes = np.concatenate([upper, -upper], axis=0)
    nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
    weights = np.full(order, 4.0 * np.pi / order)
    return SphereQuadrature(nodes=nodes, weights=weights, degree=1)


def product_rule(degree: int) -> SphereQuadrature:
    """Gauss-Legendre x uniform-azimuth rule, exact for harmonics <= degree."""
    if degree < 0 or degree > 200:
        raise ValueError(f"unsupported degree {degree}")
    n_z = degree // 2 + 1
    n_phi = degree + 1
    z, wz = np.polynomial.legendre.leggauss(n_z)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    rho = np.sqrt(1.0 - z**2)
    nodes = np.stack(
        [
            np.outer(rho, np.cos(phi)).ravel(),
            np.outer(rho, np.sin(phi)).ravel(),
            np.outer(z, np.ones(n_phi)).ravel(),
        ],
        axis=1,
    )
    weights = np.outer(wz, np.full(n_phi, 2.0 * np.pi / n_phi)).ravel()
    return SphereQuadrature(nodes=nodes, weights=weights, degree=degree)


def green_mass(t: float) -> float:
    """Total mass of G(t, .): the measure (1/(4 pi t)) sigma_t has mass t."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    return float(t)


@dataclass(frozen=True)
class InitialData:
    """Initial displacement v0 (with gradient) and initial velocity v0_dot.

    The callables take an (n, 3) array of points and return an (n,) array
    (grad_v0 returns (n, 3)).  holder_meta carries the Holder orders
    (gamma1, gamma2) declared for the data.
    """

    v0: Callable[[np.ndarray], np.ndarray]
    grad_v0: Callable[[np.ndarray], np.ndarray]
    v0_dot: Callable[[np.ndarray], np.ndarray]
    holder_meta: tuple[float, float] = (1.0, 1.0)

    def is_zero(self) -> bool:
        probe = np.array([[0.1, -0.2, 0.3], [0.0, 0.0, 0.0]])
        return (
            not np.any(self.v0(probe))
            and not np.any(self.grad_v0(probe))
            and not np.any(self.v0_dot(probe))
        )


def zero_initial_data() -> InitialData:
    zero_s = lambda pts: np.zeros(len(pts))
    zero_v = lambda pts: np.zeros((len(pts), 3))
    return InitialData(v0=zero_s, grad_v0=zero_v, v0_dot=zero_s)


def kirchhoff_ic(data: InitialData, t: float, x, quad: SphereQuadrature) -> float:
    """X0(t, x) by Kirchhoff's formula.

    X0 = [G(t) * v0_dot] + d/dt [G(t) * v0]
       = t avg v0_dot(x + t xi) + avg v0(x + t xi) + t avg <grad v0(x + t xi), xi>,
    with averages over the unit sphere.  The time derivative uses the
    analytic expansion, not numerical differentiation.
    """
    if t <= 0:
        raise ValueError(f"t must be > 0, got {t}")
    x = np.asarray(x, dtype=float)
    pts = x[None, :] + t * quad.nodes
    w = quad.weights / (4.0 * np.pi)
    avg_vdot = float(w @ data.v0_dot(pts))
    avg_v0 = float(w @ data.v0(pts))
    avg_grad = float(w @ np.sum(data.grad_v0(pts) * quad.nodes, axis=1))
    return t * avg_vdot + avg_v0 + t * avg_grad


def kirchhoff_ic_many(data: InitialData, times, points, quad: SphereQuadrature) -> np.ndarray:
    """X0 on a (time, point) grid; vectorized over the sphere nodes."""
    times = np.asarray(times, dtype=float)
    points = np.asarray(points, dtype=float)
    out = np.zeros((len(times), len(points)))
    w = quad.weights / (4.0 * np.pi)
    for i, t in enumerate(times):
        if t <= 0:
            out[i] = data.v0(points)
            continue
        pts = points[:, None, :] + t * quad.nodes[None, :, :]
        flat = pts.reshape(-1, 3)
        avg_vdot = data.v0_dot(flat).reshape(len(points), -1) @ w
        avg_v0 = data.v0(flat).reshape(len(points), -1) @ w
        dots = np.sum(data.grad_v0(flat).reshape(len(points), -1, 3) * quad.nodes[None, :, :], axis=2)
        out[i] = t * avg_vdot + avg_v0 + t * (dots @ w)
    return out


def _near_field_mass(spec: CovarianceSpec, s: float, s_prime: float, d: float,
                     r_cut: float) -> float:
    """Exact integral of f * chi(q / r_cut) against the pair-distance law.

    For independent uniform points on spheres of radii s, s', the
    difference u - v is isotropic with radial density m / (2 s s') on
    [|s - s'|, s + s'];  averaging f over directions at offset d reduces
    the whole double integral to one (d = 0) or two (d > 0) radial
    integrals.
    """
    lo, hi = abs(s - s_prime), s + s_prime

    def smooth_cut(q):
        u = np.clip(q / r_cut, 0.0, 1.0)
        return 1.0 - u * u * (3.0 - 2.0 * u)  # 1 at q=0, 0 at q>=r_cut, C^1

    if d == 0.0:
        fun = lambda m: m / (2.0 * s * s_prime) * eval_kernel_radial(spec, m) * smooth_cut(m)
        top = min(hi, r_cut)
        if top <= lo:
            return 0.0
        val, _ = integrate.quad(fun, lo, top, limit=200,
                                points=[spec.reg_radius] if lo < spec.reg_radius < top else None)
        return float(s * s_prime * val)

    def avg_over_directions(m):
        a, b = abs(d - m), d + m
        top = min(b, r_cut)
        if top <= a:
            return 0.0
        inner, _ = integrate.quad(
            lambda q: q * eval_kernel_radial(spec, q) * smooth_cut(q), a, top, limit=100,
        )
        return inner / (2.0 * d * m)

    fun = lambda m: m / (2.0 * s * s_prime) * avg_over_directions(m)
    # only m with |d - m| < r_cut contribute
    a_m, b_m = max(lo, d - r_cut), min(hi, d + r_cut)
    if b_m <= a_m:
        return 0.0
    val, _ = integrate.quad(fun, a_m, b_m, limit=200)
    return float(s * s_prime * val)


def sphere_pair_pairing(spec: CovarianceSpec, s: float, s_prime: float, offset,
                        quad: SphereQuadrature | None = None) -> float:
    """The pairing  integral of f(offset + u - v) dG(s, u) dG(s', v).

    The two G measures are realized as node sets (the second one rotated
    by a fixed generic rotation so node pairs never coincide).  The
    kernel is split smoothly into a near part, integrated exactly through
    the radial pair-distance law, and a far part summed by the product
    rule; the split removes the product rule's diagonal-singularity bias.
    """
    if s <= 0 or s_prime <= 0:
        raise ValueError("sphere radii must be > 0")
    if quad is None:
        quad = sphere_nodes(256)
    offset = np.asarray(offset, dtype=float)
    d = float(np.linalg.norm(offset))

    u = s * quad.nodes
    v = s_prime * (quad.nodes @ _FIXED_ROTATION.T)
    w = np.outer(quad.weights, quad.weights).ravel() * (s * s_prime / (16.0 * np.pi**2))
    diff = offset[None, None, :] + u[:, None, :] - v[None, :, :]
    q = np.linalg.norm(diff.reshape(-1, 3), axis=1)

    # near/far split at a few node spacings; the smooth blend makes the
    # far sum a quadrature of a bounded integrand
    r_cut = 6.0 * max(s, s_prime) / np.sqrt(quad.order)
    uu = np.clip(q / r_cut, 0.0, 1.0)
    far_blend = uu * uu * (3.0 - 2.0 * uu)
    far = float(np.sum(w * eval_kernel_radial(spec, q) * far_blend))
    near = _near_field_mass(spec, s, s_prime, d, r_cut)
    return far + near
