import numpy as np
import pytest
from scipy import integrate

from stochwave import wavekernel as W
from stochwave.kernels import CovarianceSpec

RIESZ = {
    beta: CovarianceSpec(kind="riesz", beta=beta, reg_radius=1e-8, horizon=1.0)
    for beta in (0.5, 1.0, 1.5)
}


class TestSphereNodes:
    @pytest.mark.parametrize("order", [16, 64, 256, 1024])
    def test_weights_and_unit_norm(self, order):
        q = W.sphere_nodes(order)
        assert q.weights.sum() == pytest.approx(4 * np.pi, abs=1e-10)
        assert np.max(np.abs(np.linalg.norm(q.nodes, axis=1) - 1.0)) < 1e-12

    @pytest.mark.parametrize("order", [16, 64, 256])
    def test_odd_moments_vanish(self, order):
        q = W.sphere_nodes(order)
        for d in range(3):
            assert abs(q.weights @ q.nodes[:, d]) < 1e-10

    @pytest.mark.parametrize("order", [64, 256, 1024])
    def test_z_second_moment(self, order):
        q = W.sphere_nodes(order)
        assert q.weights @ q.nodes[:, 2] ** 2 == pytest.approx(4 * np.pi / 3, abs=1e-6)

    def test_unsupported_orders(self):
        with pytest.raises(ValueError):
            W.sphere_nodes(63)
        with pytest.raises(ValueError):
            W.sphere_nodes(2)

    @pytest.mark.parametrize("degree", [2, 5])
    def test_product_rule_exact_to_degree(self, degree):
        q = W.product_rule(degree)
        # monomials up to degree 2: constants, linears, quadratics
        assert q.weights.sum() == pytest.approx(4 * np.pi, rel=1e-13)
        for d in range(3):
            assert abs(q.weights @ q.nodes[:, d]) < 1e-12
        for d1 in range(3):
            for d2 in range(3):
                target = 4 * np.pi / 3 if d1 == d2 else 0.0
                got = q.weights @ (q.nodes[:, d1] * q.nodes[:, d2])
                assert got == pytest.approx(target, abs=1e-12)


class TestGreenMass:
    @pytest.mark.parametrize("t", [0.0, 1.0, 2.5])
    def test_mass_is_t(self, t):
        assert W.green_mass(t) == t

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            W.green_mass(-0.1)


def quadratic_data():
    return W.InitialData(
        v0=lambda pts: np.sum(pts**2, axis=1),
        grad_v0=lambda pts: 2.0 * pts,
        v0_dot=lambda pts: np.zeros(len(pts)),
        holder_meta=(1.0, 1.0),
    )


class TestKirchhoff:
    def test_zero_data(self):
        q = W.sphere_nodes(64)
        assert W.kirchhoff_ic(W.zero_initial_data(), 0.5, [0.1, 0, 0], q) == 0.0

    def test_constant_displacement(self):
        q = W.sphere_nodes(64)
        data = W.InitialData(
            v0=lambda pts: np.full(len(pts), 3.0),
            grad_v0=lambda pts: np.zeros((len(pts), 3)),
            v0_dot=lambda pts: np.zeros(len(pts)),
        )
        assert W.kirchhoff_ic(data, 0.7, [0, 0, 0], q) == pytest.approx(3.0, rel=1e-12)

    def test_unit_velocity_gives_t(self):
        q = W.sphere_nodes(64)
        data = W.InitialData(
            v0=lambda pts: np.zeros(len(pts)),
            grad_v0=lambda pts: np.zeros((len(pts), 3)),
            v0_dot=lambda pts: np.ones(len(pts)),
        )
        assert W.kirchhoff_ic(data, 0.7, [0.2, -0.1, 0], q) == pytest.approx(0.7, rel=1e-12)

    def test_quadratic_classical_solution(self):
        # v0 = |x|^2, v0_dot = 0  ->  u = |x|^2 + 3 t^2, exact for a degree-2 rule
        q = W.product_rule(2)
        for t, x in [(0.3, [0.0, 0.0, 0.0]), (1.0, [0.5, -0.2, 0.1])]:
            x = np.asarray(x)
            expect = float(x @ x + 3 * t**2)
            assert W.kirchhoff_ic(quadratic_data(), t, x, q) == pytest.approx(
                expect, rel=1e-12
            )

    def test_gradient_consistency_probe(self):
        # central differences of v0 reproduce grad_v0 to O(step^2)
        data = quadratic_data()
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(10, 3))
        step = 1e-5
        for d in range(3):
            e = np.zeros(3)
            e[d] = step
            fd = (data.v0(pts + e) - data.v0(pts - e)) / (2 * step)
            assert np.allclose(fd, data.grad_v0(pts)[:, d], atol=1e-8)

    def test_time_must_be_positive(self):
        with pytest.raises(ValueError):
            W.kirchhoff_ic(quadratic_data(), 0.0, [0, 0, 0], W.sphere_nodes(64))


def radial_pair_oracle(beta, s, s_prime, d):
    """1D reduction of the pairing for a Riesz kernel (independent oracle).

    u - v is isotropic with |u - v| distributed with density m/(2 s s') on
    [|s-s'|, s+s']; averaging |d e + m w|^-beta over directions w has the
    closed kernel ((d+m)^(2-b) - |d-m|^(2-b)) / (2 d m (2-b)).
    """
    lo, hi = abs(s - s_prime), s + s_prime
    if d == 0.0:
        fun = lambda m: m / (2 * s * s_prime) * m ** (-beta)
    else:
        def fun(m):
            num = (d + m) ** (2 - beta) - abs(d - m) ** (2 - beta)
            return m / (2 * s * s_prime) * num / (2 * d * m * (2 - beta))
    val, _ = integrate.quad(fun, lo, hi, points=[d] if lo < d < hi else None, limit=200)
    return s * s_prime * val


class TestSpherePairPairing:
    @pytest.mark.parametrize("beta", [0.5, 1.0, 1.5])
    @pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
    def test_diagonal_closed_form(self, beta, s):
        # s^(2-beta) 2^(1-beta) / (2-beta), within 2% at 256 nodes
        quad = W.sphere_nodes(256)
        val = W.sphere_pair_pairing(RIESZ[beta], s, s, [0, 0, 0], quad)
        expect = s ** (2 - beta) * 2 ** (1 - beta) / (2 - beta)
        assert val == pytest.approx(expect, rel=0.02)

    def test_beta_one_tight(self):
        quad = W.sphere_nodes(256)
        assert W.sphere_pair_pairing(RIESZ[1.0], 1.0, 1.0, [0, 0, 0], quad) == pytest.approx(
            1.0, rel=0.01
        )
        assert W.sphere_pair_pairing(RIESZ[1.0], 2.0, 2.0, [0, 0, 0], quad) == pytest.approx(
            2.0, rel=0.01
        )

    @pytest.mark.parametrize("beta,d", [(1.0, 0.5), (1.0, 1.5), (0.5, 1.0), (1.5, 0.7)])
    def test_offset_against_radial_oracle(self, beta, d):
        quad = W.sphere_nodes(256)
        val = W.sphere_pair_pairing(RIESZ[beta], 1.0, 1.0, [d, 0, 0], quad)
        assert val == pytest.approx(radial_pair_oracle(beta, 1.0, 1.0, d), rel=0.01)

    def test_symmetric_in_radii(self):
        quad = W.sphere_nodes(256)
        a = W.sphere_pair_pairing(RIESZ[1.0], 0.4, 1.1, [0, 0, 0], quad)
        b = W.sphere_pair_pairing(RIESZ[1.0], 1.1, 0.4, [0, 0, 0], quad)
        assert a == pytest.approx(b, rel=1e-10)

    def test_constant_kernel_mass_identity(self):
        # f == 1: the pairing is the product of the two total masses s * s'
        spec = CovarianceSpec(kind="tabulated", table_r=(1e-6, 10.0),
                              table_f=(1.0, 1.0), reg_radius=1e-6)
        quad = W.sphere_nodes(128)
        val = W.sphere_pair_pairing(spec, 0.7, 1.3, [0.2, 0, 0], quad)
        assert val == pytest.approx(0.7 * 1.3, rel=1e-9)

    def test_invalid_radii(self):
        with pytest.raises(ValueError):
            W.sphere_pair_pairing(RIESZ[1.0], 0.0, 1.0, [0, 0, 0])
