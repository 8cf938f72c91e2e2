import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from levyssm.sde import (
    LangevinSDE,
    LinearSDE,
    compute_m_S,
    drift_compensator,
    ft_kernel,
    gaussian_sde_cov,
    mat_exp,
    mean_ft,
    residual_cov_bare,
    transition_stats,
    unit_compensator,
)
from levyssm.stable import JumpSet, StableParams, sample_jump_set, segment_sums


# ---------------------------------------------------------------------------
# Independent numeric oracles: kernel values on a grid via eigendecomposition
# and interval integrals via composite trapezoid quadrature.  Neither route
# is used by the production code (closed forms / Pade expm / block expm).
# ---------------------------------------------------------------------------

def eig_ft_grid(A, h, t, us):
    lam, V = np.linalg.eig(np.asarray(A, dtype=complex))
    coeff = np.linalg.solve(V, np.asarray(h, dtype=complex))
    F = V @ (np.exp(np.outer(lam, t - us)) * coeff[:, None])
    return F.real


def trapz_int_ft(A, h, s, t, n=100_000):
    us = np.linspace(s, t, n + 1)
    F = eig_ft_grid(A, h, t, us)
    return np.trapezoid(F, us, axis=1)


def trapz_gram(A, h, s, t, n=100_000):
    us = np.linspace(s, t, n + 1)
    F = eig_ft_grid(A, h, t, us)
    G = np.einsum("ik,jk->ijk", F, F)
    return np.trapezoid(G, us, axis=2)


def random_system(rng, P=3):
    A = rng.normal(scale=0.8, size=(P, P))
    A -= (np.max(np.linalg.eigvals(A).real) + 0.3) * np.eye(P)  # keep stable-ish
    h = rng.normal(size=P)
    return LinearSDE(A, h)


class TestMatExp:
    def test_identity_at_zero(self):
        sde = LangevinSDE(-0.7)
        np.testing.assert_allclose(sde.expm(0.0), np.eye(2), atol=1e-15)
        A = np.array([[0.2, -1.0], [0.5, -0.3]])
        np.testing.assert_allclose(mat_exp(A, 0.0), np.eye(2), atol=1e-15)

    def test_langevin_closed_form_value(self):
        got = LangevinSDE(-0.5).expm(1.0)
        expected = np.array([[1.0, 0.7869386805747332], [0.0, 0.6065306597126334]])
        np.testing.assert_allclose(got, expected, atol=1e-12)

    @pytest.mark.parametrize("theta", [-0.1, -0.9, -2.5])
    @pytest.mark.parametrize("t", [0.02, 0.7, 3.0])
    def test_langevin_matches_generic(self, theta, t):
        sde = LangevinSDE(theta)
        np.testing.assert_allclose(sde.expm(t), mat_exp(sde.A, t), atol=1e-12)

    def test_semigroup(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            sde = random_system(rng)
            s, t = rng.uniform(0.05, 1.5, size=2)
            np.testing.assert_allclose(
                mat_exp(sde.A, s + t), mat_exp(sde.A, s) @ mat_exp(sde.A, t), atol=1e-10
            )


class TestFtKernel:
    def test_at_input_time_returns_h(self):
        sde = LangevinSDE(-1.0)
        np.testing.assert_allclose(ft_kernel(sde, 2.0, 2.0), sde.h, atol=1e-15)

    def test_future_input_is_zero(self):
        sde = LangevinSDE(-1.0)
        np.testing.assert_array_equal(ft_kernel(sde, 1.0, 1.5), np.zeros(2))
        generic = LinearSDE(np.array([[0.1]]), np.array([2.0]))
        np.testing.assert_array_equal(ft_kernel(generic, 0.0, 0.5), np.zeros(1))

    def test_langevin_frozen_value(self):
        got = ft_kernel(LangevinSDE(-1.0), 1.0, 0.0)
        expected = np.array([1.0 - math.exp(-1.0), math.exp(-1.0)])
        np.testing.assert_allclose(got, expected, atol=1e-12)
        assert got[0] == pytest.approx(0.6321205588285577)
        assert got[1] == pytest.approx(0.36787944117144233)

    def test_ft_many_matches_single(self):
        rng = np.random.default_rng(1)
        for sde in (LangevinSDE(-0.8), random_system(rng)):
            us = np.array([0.1, 0.4, 0.95])
            F = sde.ft_many(1.0, us)
            for i, u in enumerate(us):
                np.testing.assert_allclose(F[:, i], sde.ft(1.0, float(u)), atol=1e-12)


class TestMeanFt:
    def test_short_interval_limit_is_h(self):
        sde = LangevinSDE(-1.0)
        np.testing.assert_allclose(mean_ft(sde, 1.0, 1.0 + 1e-6), sde.h, atol=2e-6)

    def test_langevin_frozen_value(self):
        got = mean_ft(LangevinSDE(-1.0), 0.0, 1.0)
        expected = np.array([math.exp(-1.0), 1.0 - math.exp(-1.0)])
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_langevin_matches_quadrature(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            theta = rng.uniform(-3.0, -0.05)
            s = rng.uniform(0.0, 1.0)
            t = s + rng.uniform(0.05, 2.0)
            sde = LangevinSDE(theta)
            oracle = trapz_int_ft(sde.A, sde.h, s, t) / (t - s)
            np.testing.assert_allclose(mean_ft(sde, s, t), oracle, atol=1e-8)

    def test_generic_matches_quadrature(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            sde = random_system(rng)
            s = rng.uniform(0.0, 1.0)
            t = s + rng.uniform(0.05, 1.5)
            oracle = trapz_int_ft(sde.A, sde.h, s, t) / (t - s)
            np.testing.assert_allclose(mean_ft(sde, s, t), oracle, atol=1e-8)

    def test_invalid_interval(self):
        with pytest.raises(ValueError):
            mean_ft(LangevinSDE(-1.0), 1.0, 1.0)


class TestGaussianSdeCov:
    def test_zero_length_interval(self):
        np.testing.assert_array_equal(
            gaussian_sde_cov(LangevinSDE(-1.0), 2.0, 2.0), np.zeros((2, 2))
        )

    def test_langevin_matches_quadrature(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            theta = rng.uniform(-3.0, -0.05)
            delta = rng.uniform(0.05, 2.0)
            sde = LangevinSDE(theta)
            oracle = trapz_gram(sde.A, sde.h, 0.0, delta)
            np.testing.assert_allclose(gaussian_sde_cov(sde, 0.0, delta), oracle, atol=1e-8)

    def test_generic_matches_quadrature(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            sde = random_system(rng)
            delta = rng.uniform(0.05, 1.5)
            oracle = trapz_gram(sde.A, sde.h, 0.0, delta)
            np.testing.assert_allclose(gaussian_sde_cov(sde, 0.0, delta), oracle, atol=1e-8)

    @given(
        theta=st.floats(min_value=-3.0, max_value=-0.05),
        delta=st.floats(min_value=1e-3, max_value=3.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_symmetric_psd(self, theta, delta):
        cov = gaussian_sde_cov(LangevinSDE(theta), 0.0, delta)
        np.testing.assert_allclose(cov, cov.T, atol=1e-14)
        eigs = np.linalg.eigvalsh(cov)
        assert eigs.min() >= -1e-10 * max(np.trace(cov), 1e-30)


class TestComputeMS:
    def params(self, alpha=1.5, c=10.0):
        return StableParams(alpha, 1.0, 1.0, c)

    def test_empty_jump_set(self):
        sde = LangevinSDE(-1.0)
        empty = JumpSet((0.0, 1.0), np.empty(0), np.empty(0), None, c=10.0)
        m, S = compute_m_S(empty, sde, self.params())
        np.testing.assert_array_equal(m, np.zeros(2))
        np.testing.assert_array_equal(S, np.zeros((2, 2)))

    def test_single_jump_at_interval_end(self):
        # gamma = 1, v = t, dt = 1: the kernel collapses to h.
        sde = LangevinSDE(-0.6)
        jumps = JumpSet((0.0, 1.0), np.array([1.0]), np.array([1.0]), None, c=10.0)
        m, S = compute_m_S(jumps, sde, self.params())
        np.testing.assert_allclose(m, sde.h, atol=1e-14)
        np.testing.assert_allclose(S, np.outer(sde.h, sde.h), atol=1e-14)

    @pytest.mark.parametrize("seed", range(6))
    def test_langevin_closed_form_matches_generic_kernel(self, seed):
        rng = np.random.default_rng(seed)
        theta = rng.uniform(-2.5, -0.1)
        s = rng.uniform(0.0, 2.0)
        t = s + rng.uniform(0.1, 1.5)
        params = self.params(alpha=rng.uniform(1.05, 1.9))
        jumps = sample_jump_set(params, (s, t), rng)
        fast = LangevinSDE(theta)
        slow = LinearSDE(fast.A, fast.h)  # generic expm route
        m_fast, S_fast = compute_m_S(jumps, fast, params)
        m_slow, S_slow = compute_m_S(jumps, slow, params)
        np.testing.assert_allclose(m_fast, m_slow, atol=1e-10)
        np.testing.assert_allclose(S_fast, S_slow, atol=1e-10)

    def test_scaling_in_h(self):
        rng = np.random.default_rng(10)
        A = rng.normal(size=(2, 2))
        h = rng.normal(size=2)
        params = self.params()
        jumps = sample_jump_set(params, (0.0, 1.0), np.random.default_rng(1))
        k = 3.0
        m1, S1 = compute_m_S(jumps, LinearSDE(A, h), params)
        m2, S2 = compute_m_S(jumps, LinearSDE(A, k * h), params)
        np.testing.assert_allclose(m2, k * m1, rtol=1e-12)
        np.testing.assert_allclose(S2, k**2 * S1, rtol=1e-12)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_jump_cov_is_psd(self, seed):
        rng = np.random.default_rng(seed)
        params = StableParams(float(rng.uniform(1.05, 1.95)), 0.5, 1.0, 8.0)
        jumps = sample_jump_set(params, (0.0, 1.0), rng)
        _, S = compute_m_S(jumps, LangevinSDE(-1.0), params)
        eigs = np.linalg.eigvalsh(S)
        assert eigs.min() >= -1e-10 * max(np.trace(S), 1e-30)


class TestCompensator:
    def test_zero_below_one(self):
        sde = LangevinSDE(-1.0)
        params = StableParams(0.8, 2.0, 1.0, 8.0)
        np.testing.assert_array_equal(drift_compensator(sde, params, 0.0, 1.0), np.zeros(2))
        np.testing.assert_array_equal(unit_compensator(sde, params, 0.0, 1.0), np.zeros(2))

    def test_zero_mark_mean(self):
        sde = LangevinSDE(-1.0)
        params = StableParams(1.5, 0.0, 1.0, 8.0)
        np.testing.assert_array_equal(drift_compensator(sde, params, 0.0, 1.0), np.zeros(2))
        # the unit compensator itself stays nonzero
        assert np.any(unit_compensator(sde, params, 0.0, 1.0) != 0.0)

    def test_frozen_composition(self):
        # alpha=1.5, mu=1, c=8, theta=-1, (0,1]: 3 * 8**(1/3) = 6 times the
        # kernel integral.
        sde = LangevinSDE(-1.0)
        params = StableParams(1.5, 1.0, 1.0, 8.0)
        expected = 6.0 * np.array([math.exp(-1.0), 1.0 - math.exp(-1.0)])
        np.testing.assert_allclose(drift_compensator(sde, params, 0.0, 1.0), expected, atol=1e-12)

    def test_monte_carlo_mean_of_jump_kernel(self):
        # E[mu_w * m] over jump sets equals the compensator (4 s.e.).
        sde = LangevinSDE(-1.0)
        params = StableParams(1.5, 1.0, 1.0, 10.0)
        s, t = 0.5, 1.75
        delta = t - s
        rng = np.random.default_rng(123)
        n = 100_000
        lam = params.c * delta
        counts = rng.poisson(lam, size=n)
        total = int(counts.sum())
        gammas = rng.uniform(0.0, lam, size=total)
        vs = t - rng.uniform(0.0, delta, size=total)
        w = gammas ** (-1.0 / params.alpha)
        F = sde.ft_many(t, vs) * w
        scale = delta ** (1.0 / params.alpha)
        target = drift_compensator(sde, params, s, t)
        for k in range(2):
            samples = params.mu_w * scale * segment_sums(F[k], counts)
            se = samples.std() / math.sqrt(n)
            assert abs(samples.mean() - target[k]) < 4 * se


class TestResidualCov:
    def test_zero_length_interval(self):
        sde = LangevinSDE(-1.0)
        params = StableParams(1.5, 1.0, 1.0, 10.0)
        np.testing.assert_array_equal(residual_cov_bare(sde, params, 1.0, 1.0), np.zeros((2, 2)))

    def test_vanishes_for_large_truncation(self):
        sde = LangevinSDE(-1.0)
        small = residual_cov_bare(sde, StableParams(1.5, 1.0, 1.0, 1e12), 0.0, 1.0)
        assert np.max(np.abs(small)) < 1e-3
        big = residual_cov_bare(sde, StableParams(1.5, 1.0, 1.0, 1.0), 0.0, 1.0)
        assert np.max(np.abs(big)) > np.max(np.abs(small))

    def test_tail_strip_monte_carlo(self):
        # Covariance of the strip of epochs in (c dt, 100 c dt] must equal
        # (sigma^2 + mu^2) (Sigma(c) - Sigma(100c)); reduced-scale version of
        # the acceptance oracle.
        sde = LangevinSDE(-1.0)
        params = StableParams(1.5, 1.0, 1.0, 5.0)
        s, t = 0.0, 1.0
        delta = t - s
        factor = 100.0
        rng = np.random.default_rng(7)
        n = 40_000
        lo, hi = params.c * delta, factor * params.c * delta
        counts = rng.poisson(hi - lo, size=n)
        total = int(counts.sum())
        gammas = rng.uniform(lo, hi, size=total)
        vs = t - rng.uniform(0.0, delta, size=total)
        marks = rng.normal(params.mu_w, params.sigma_w, size=total)
        contrib = sde.ft_many(t, vs) * marks * gammas ** (-1.0 / params.alpha)
        scale = delta ** (1.0 / params.alpha)
        X = np.stack([segment_sums(contrib[k], counts) for k in range(2)], axis=1) * scale
        emp = np.cov(X.T)  # the strip sum is skewed: covariance, not second moment
        mark2 = params.sigma_w**2 + params.mu_w**2
        wide = residual_cov_bare(sde, params, s, t)
        narrow = residual_cov_bare(sde, StableParams(params.alpha, params.mu_w, params.sigma_w, factor * params.c), s, t)
        target = mark2 * (wide - narrow)
        rel = np.linalg.norm(emp - target) / np.linalg.norm(target)
        assert rel < 0.05

    def test_transition_stats_assembly(self):
        sde = LangevinSDE(-0.4)
        params = StableParams(1.2, -1.0, 0.7, 6.0)
        jumps = sample_jump_set(params, (1.0, 2.5), np.random.default_rng(3))
        stats = transition_stats(jumps, sde, params)
        assert stats.interval == (1.0, 2.5)
        m, S = compute_m_S(jumps, sde, params)
        np.testing.assert_array_equal(stats.jump_mean, m)
        np.testing.assert_array_equal(stats.jump_cov, S)
        np.testing.assert_array_equal(stats.unit_compensator, unit_compensator(sde, params, 1.0, 2.5))
        np.testing.assert_array_equal(stats.residual_cov_bare, residual_cov_bare(sde, params, 1.0, 2.5))


class TestGuards:
    @pytest.mark.parametrize("theta", [0.0, 0.5, -1e-9])
    def test_langevin_theta_guard(self, theta):
        with pytest.raises(ValueError):
            LangevinSDE(theta)

    def test_linear_sde_shape_checks(self):
        with pytest.raises(ValueError):
            LinearSDE(np.zeros((2, 3)), np.zeros(2))
        with pytest.raises(ValueError):
            LinearSDE(np.zeros((2, 2)), np.zeros(3))
        with pytest.raises(ValueError):
            LinearSDE(np.array([[np.inf, 0], [0, 0]]), np.zeros(2))
