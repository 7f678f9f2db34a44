import numpy as np
import pytest
from scipy import integrate

from stochwave import kernels as K

RIESZ = {
    beta: K.CovarianceSpec(kind="riesz", beta=beta, reg_radius=1e-8, horizon=1.0)
    for beta in (0.5, 1.0, 1.5)
}


class TestEvalKernel:
    def test_direct_formula(self):
        assert K.eval_kernel(RIESZ[1.0], [0.0, 0.0, 2.0]) == pytest.approx(0.5)
        assert K.eval_kernel(RIESZ[0.5], [4.0, 0.0, 0.0]) == pytest.approx(0.5)

    def test_regularized_at_origin(self):
        spec = K.CovarianceSpec(kind="riesz", beta=1.0, reg_radius=0.01)
        assert K.eval_kernel(spec, [0.0, 0.0, 0.0]) == pytest.approx(100.0)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(size=3)
            q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
            assert K.eval_kernel(RIESZ[1.0], x) == pytest.approx(
                K.eval_kernel(RIESZ[1.0], q @ x), rel=1e-12
            )

    def test_invalid_kernels_rejected(self):
        with pytest.raises(K.InvalidKernelError):
            K.CovarianceSpec(kind="riesz", beta=2.5)
        with pytest.raises(K.InvalidKernelError):
            K.CovarianceSpec(kind="riesz", beta=1.0, reg_radius=0.0)
        with pytest.raises(K.InvalidKernelError):
            K.CovarianceSpec(kind="tabulated", table_r=(0.1, 1.0), table_f=(1.0, -0.5),
                             reg_radius=0.01)

    def test_tabulated_interpolation_and_extrapolation_error(self):
        spec = K.CovarianceSpec(kind="tabulated", table_r=(0.01, 0.1, 1.0, 10.0),
                                table_f=(4.0, 2.0, 1.0, 1.0), reg_radius=0.01)
        # linear in log r between the second and third sample
        mid = np.sqrt(0.1 * 1.0)
        assert K.eval_kernel(spec, [mid, 0, 0]) == pytest.approx(1.5)
        with pytest.raises(K.InvalidKernelError):
            K.eval_kernel(spec, [100.0, 0.0, 0.0])

    def test_load_tabulated(self, tmp_path):
        f = tmp_path / "prof.txt"
        f.write_text("0.1 2.0\n1.0 1.0\n10.0 0.5\n")
        spec = K.load_tabulated(f, reg_radius=0.05)
        assert K.eval_kernel(spec, [1.0, 0.0, 0.0]) == pytest.approx(1.0)


class TestBasicIntegrability:
    def test_riesz_closed_form(self):
        # radial reduction: 4 pi / (2 - beta)
        assert K.basic_integrability(RIESZ[1.0]) == pytest.approx(4 * np.pi, rel=1e-4)
        assert K.basic_integrability(RIESZ[0.5]) == pytest.approx(8 * np.pi / 3, rel=1e-4)

    def test_grows_as_beta_approaches_two(self):
        vals = [
            K.basic_integrability(K.CovarianceSpec(kind="riesz", beta=b, reg_radius=1e-8))
            for b in (1.0, 1.5, 1.9, 1.99)
        ]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_divergent_tabulated_guarded(self):
        spec = K.CovarianceSpec(
            kind="tabulated", table_r=(1e-15, 1e-9, 1.0),
            table_f=(1e18, 1e16, 1.0), reg_radius=1e-14,
        )
        with pytest.raises(K.NonIntegrableKernelError):
            K.basic_integrability(spec)


def mc_increment_integral(beta, w, second=False, n=400_000, seed=1):
    """Monte Carlo oracle for the H1 integrals (importance-sampled in radius)."""
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, 3))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    r = 2.0 * np.sqrt(rng.random(n))  # density r/2 on [0,2]
    pts = z * r[:, None]
    f = lambda p: np.maximum(np.linalg.norm(p, axis=1), 1e-300) ** (-beta)
    w = np.asarray(w, dtype=float)
    if second:
        g = np.abs(f(pts + w) - 2 * f(pts) + f(pts - w))
    else:
        g = np.abs(f(pts + w) - f(pts))
    # E[g(z)/|z| / density] with density r/2 / (4 pi r^2): the weight is 8 pi
    return float(np.mean(g) * 8 * np.pi)


class TestH1Integrals:
    def test_zero_shift(self):
        assert K.h1_increment_integral(RIESZ[1.0], [0, 0, 0]) == 0.0
        assert K.h1_second_difference_integral(RIESZ[1.0], [0, 0, 0]) == 0.0

    def test_monotone_trend(self):
        vals = [K.h1_increment_integral(RIESZ[1.0], [w, 0, 0]) for w in (0.05, 0.1, 0.2)]
        assert vals[0] < vals[1] < vals[2]

    def test_symmetry_under_negation(self):
        w = np.array([0.07, -0.03, 0.11])
        assert K.h1_increment_integral(RIESZ[1.0], w) == pytest.approx(
            K.h1_increment_integral(RIESZ[1.0], -w), rel=1e-6
        )

    def test_against_monte_carlo(self):
        mine = K.h1_increment_integral(RIESZ[1.0], [0.2, 0, 0])
        mc = mc_increment_integral(1.0, [0.2, 0, 0])
        assert mine == pytest.approx(mc, rel=0.05)

    def test_second_difference_monotone(self):
        v1 = K.h1_second_difference_integral(RIESZ[1.0], [0.1, 0, 0])
        v2 = K.h1_second_difference_integral(RIESZ[1.0], [0.2, 0, 0])
        assert v2 > v1

    def test_second_difference_against_monte_carlo(self):
        mine = K.h1_second_difference_integral(RIESZ[1.0], [0.1, 0, 0])
        mc = mc_increment_integral(1.0, [0.1, 0, 0], second=True)
        assert mine == pytest.approx(mc, rel=0.08)

    def test_gamma_slope_window(self):
        est = K.fit_h1_gamma(RIESZ[1.0])
        assert 0.7 <= est.exponent <= 1.0
        assert est.r_squared > 0.98

    @pytest.mark.parametrize("beta", [0.5, 1.0, 1.5])
    def test_gamma_prime_in_range(self, beta):
        est = K.fit_h1_gamma_prime(RIESZ[beta])
        assert 0.0 < est.exponent <= 2.0
        assert est.r_squared > 0.99


class TestSmallBall:
    def test_closed_form(self):
        # 4 pi h^(2-beta) / (2-beta)
        assert K.h2_small_ball_integral(RIESZ[1.0], 0.5) == pytest.approx(
            2 * np.pi, rel=1e-3
        )

    def test_vanishes_with_h(self):
        vals = [K.h2_small_ball_integral(RIESZ[1.0], h) for h in (0.2, 0.05, 0.01)]
        assert vals[0] > vals[1] > vals[2]
        assert vals[2] < 0.2

    def test_nondecreasing_in_h(self):
        hs = np.linspace(0.05, 2.0, 12)
        vals = [K.h2_small_ball_integral(RIESZ[0.5], h) for h in hs]
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_matches_closed_form_relative(self):
        for beta in (0.5, 1.0, 1.5):
            for h in (0.1, 0.7, 1.6):
                expect = 4 * np.pi * h ** (2 - beta) / (2 - beta)
                assert K.h2_small_ball_integral(RIESZ[beta], h) == pytest.approx(
                    expect, rel=1e-3
                )

    @pytest.mark.parametrize("beta,target", [(0.5, 1.0), (1.0, 1.0), (1.5, 0.5)])
    def test_nu_hat(self, beta, target):
        est = K.fit_small_ball_nu(RIESZ[beta])
        assert est.exponent == pytest.approx(target, abs=0.01)

    def test_h_out_of_range(self):
        with pytest.raises(ValueError):
            K.h2_small_ball_integral(RIESZ[1.0], 0.0)
        with pytest.raises(ValueError):
            K.h2_small_ball_integral(RIESZ[1.0], 2.5)


class TestSpherePair:
    def test_vanishes_at_zero_shift(self):
        v1, v2 = K.h2_sphere_pair_integrals(RIESZ[1.0], 1e-12)
        assert v1 == pytest.approx(0.0, abs=1e-6)
        assert v2 == pytest.approx(0.0, abs=1e-6)

    def test_increasing_in_h(self):
        vals = [K.h2_sphere_pair_integrals(RIESZ[1.0], h) for h in (0.05, 0.1, 0.2)]
        assert vals[0][0] < vals[1][0] < vals[2][0]
        assert vals[0][1] < vals[1][1] < vals[2][1]

    def test_radial_reduction_matches_product_rule(self):
        # the exact reduction and the raw double-node rule agree at moderate h
        for h in (0.2, 0.5):
            r = K.h2_sphere_pair_integrals(RIESZ[1.0], h)
            p = K.h2_sphere_pair_integrals(RIESZ[1.0], h, nodes_per_sphere=128,
                                           method="product")
            assert r[0] == pytest.approx(p[0], rel=0.15)
            assert r[1] == pytest.approx(p[1], rel=0.15)

    def test_rho_fits_capped_and_admissible(self):
        e1, e2 = K.fit_sphere_pair_exponents(RIESZ[1.0])
        assert 0.0 < e1.exponent <= 1.0
        assert 0.0 < e2.exponent <= 2.0


class TestHolderWindow:
    def test_all_maximal(self):
        assert K.admissible_holder_window(1, 1, 1, 2, 1, 1, 2) == (1.0, 1.0)

    def test_single_active_minimum(self):
        k, r = K.admissible_holder_window(1, 1, 0.5, 2, 1, 1, 2)
        assert (k, r) == (0.5, 0.5)

    def test_riesz_beta_one_window(self):
        # heuristic exponents for beta = 1 reproduce the classical (2-beta)/2 window
        k, r = K.admissible_holder_window(1, 1, 1, 1, 1, 1, 1)
        assert (k, r) == (0.5, 0.5)

    def test_symmetric_in_gamma12(self):
        a = K.admissible_holder_window(0.3, 0.9, 1, 2, 1, 1, 2)
        b = K.admissible_holder_window(0.9, 0.3, 1, 2, 1, 1, 2)
        assert a == b

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            K.admissible_holder_window(0.0, 1, 1, 2, 1, 1, 2)
        with pytest.raises(ValueError):
            K.admissible_holder_window(1, 1, 1, 2.5, 1, 1, 2)


class TestExponentEstimate:
    def test_sample_points_must_increase(self):
        with pytest.raises(ValueError):
            K.ExponentEstimate(1.0, 0.0, 1.0, ((0.2, 1.0), (0.1, 2.0)))

    def test_values_nonnegative(self):
        with pytest.raises(ValueError):
            K.ExponentEstimate(1.0, 0.0, 1.0, ((0.1, -1.0), (0.2, 2.0)))
