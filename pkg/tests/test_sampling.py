"""Direct Gaussian sampling, density evaluation, and the HMC chain."""

import math

import numpy as np
import pytest
from scipy import stats

from hk_expect import (
    CapabilityError,
    DensitySpec,
    GaussianWavepacket,
    HmcParams,
    Observable,
    PhaseSpacePoint,
    SimConfig,
    WidthMatrix,
    density_eval_unnormalized,
    direct_sample,
    hmc_sample,
)
from hk_expect.core import sigma0
from hk_expect.sampling import (
    log_density_unnormalized,
    optimal_potential,
    optimal_potential_gradient,
)


def packet(q0, p0, gamma=None, eps=1.0):
    q0 = np.atleast_1d(np.asarray(q0, float))
    p0 = np.atleast_1d(np.asarray(p0, float))
    dim = q0.size
    width = WidthMatrix.identity(dim) if gamma is None else WidthMatrix.from_diagonal(gamma)
    return GaussianWavepacket(PhaseSpacePoint(q0, p0), width, SimConfig(dim, eps))


class TestDensitySpec:
    def test_optimal_needs_observable(self):
        with pytest.raises(ValueError):
            DensitySpec("optimal", packet(0.0, 0.0))

    def test_optimal_non_identity_needs_unit_width(self):
        psi0 = packet([0.0], [0.0], gamma=[2.0])
        with pytest.raises(CapabilityError):
            DensitySpec("optimal", psi0, Observable.position(1))
        # identity observable is fine for any SPD width
        DensitySpec("optimal", psi0, Observable.identity())

    def test_non_optimal_takes_no_observable(self):
        with pytest.raises(ValueError):
            DensitySpec("husimi", packet(0.0, 0.0), Observable.identity())


class TestDensityEval:
    def test_sqrt_husimi_peaks_at_center(self, rng):
        psi0 = packet([1.0, -0.5], [0.3, 0.2], eps=0.7)
        spec = DensitySpec("sqrt-husimi", psi0)
        w0 = np.concatenate([psi0.center.as_vector()] * 2)
        peak = density_eval_unnormalized(spec, w0)
        assert peak == pytest.approx(1.0)
        for _ in range(50):
            w = w0 + rng.standard_normal(8)
            assert density_eval_unnormalized(spec, w) <= peak

    def test_optimal_identity_log_density_quadratic_form(self, rng):
        # log rho - log rho(peak) must equal -(1/4 eps) dw' [[2S0,-S0],[-S0,2S0]] dw
        eps = 0.5
        psi0 = packet([0.7], [-0.2], gamma=[1.7], eps=eps)
        spec = DensitySpec("optimal", psi0, Observable.identity())
        s0 = sigma0(psi0.width)
        kmat = np.block([[2 * s0, -s0], [-s0, 2 * s0]])
        w0 = np.concatenate([psi0.center.as_vector()] * 2)
        for _ in range(50):
            w = w0 + rng.standard_normal(4)
            dw = w - w0
            want = -dw @ kmat @ dw / (4 * eps)
            got = log_density_unnormalized(spec, w) - log_density_unnormalized(spec, w0)
            assert got == pytest.approx(want, rel=1e-10)

    def test_optimal_position_vanishes_on_polynomial_zero(self):
        psi0 = packet([0.0], [0.0])
        spec = DensitySpec("optimal", psi0, Observable.position(1))
        # q_y + q_z = 0 and p_z - p_y = 0 make Pol = (v_1)/2 = 0
        w = np.array([1.0, 0.3, -1.0, 0.3])
        assert density_eval_unnormalized(spec, w) == 0.0
        assert density_eval_unnormalized(spec, w + 1e-3) > 0.0


class TestDirectSampling:
    def test_reproducible(self):
        spec = DensitySpec("sqrt-husimi", packet([1.0], [1.0]))
        a = direct_sample(spec, 1000, seed=5)
        b = direct_sample(spec, 1000, seed=5)
        np.testing.assert_array_equal(a.points, b.points)
        assert not np.array_equal(a.points, direct_sample(spec, 1000, seed=6).points)

    def test_sqrt_husimi_moments(self):
        spec = DensitySpec("sqrt-husimi", packet([1.0], [1.0]))
        batch = direct_sample(spec, 200_000, seed=7)
        mean = batch.points.mean(axis=0)
        var = batch.points.var(axis=0)
        np.testing.assert_allclose(mean, [1.0, 1.0, 1.0, 1.0], atol=0.02)
        np.testing.assert_allclose(var, [2.0, 2.0, 2.0, 2.0], rtol=0.03)

    def test_husimi_moments(self):
        spec = DensitySpec("husimi", packet([1.0], [1.0]))
        batch = direct_sample(spec, 200_000, seed=8)
        np.testing.assert_allclose(batch.points.var(axis=0), np.ones(4), rtol=0.03)

    def test_husimi_moments_nonunit_width(self):
        # covariance eps * Sigma0^{-1} = eps * diag(1/gamma, gamma)
        spec = DensitySpec("husimi", packet([0.0], [0.0], gamma=[4.0], eps=0.5))
        batch = direct_sample(spec, 200_000, seed=9)
        np.testing.assert_allclose(
            batch.points.var(axis=0), [0.125, 2.0, 0.125, 2.0], rtol=0.04
        )

    def test_optimal_identity_covariance(self):
        # Cov[(y,z)] = 2 eps K^-1 with K = [[2S0,-S0],[-S0,2S0]]; entrywise to 5%
        eps = 1.0
        psi0 = packet([1.0, 0.0], [0.0, 1.0], gamma=[1.0, 2.0], eps=eps)
        spec = DensitySpec("optimal", psi0, Observable.identity())
        batch = direct_sample(spec, 400_000, seed=10)
        s0 = sigma0(psi0.width)
        kmat = np.block([[2 * s0, -s0], [-s0, 2 * s0]])
        want = 2 * eps * np.linalg.inv(kmat)
        got = np.cov(batch.points.T)
        scale = np.abs(want).max()
        assert np.abs(got - want).max() <= 0.05 * scale

    def test_log_density_recorded(self):
        spec = DensitySpec("sqrt-husimi", packet([0.0], [0.0]))
        batch = direct_sample(spec, 100, seed=11)
        np.testing.assert_allclose(
            batch.log_density, log_density_unnormalized(spec, batch.points)
        )

    def test_optimal_non_identity_rejected(self):
        spec = DensitySpec("optimal", packet([0.0], [0.0]), Observable.position(1))
        with pytest.raises(CapabilityError):
            direct_sample(spec, 10, seed=0)


class TestHmcPotential:
    @pytest.mark.parametrize(
        "obs",
        [
            Observable.identity(),
            Observable.position(1),
            Observable.position_sq(2),
            Observable.momentum(2),
            Observable.momentum_sq(1),
            Observable.kinetic(),
            Observable.potential_harmonic(),
            Observable.potential_henon_heiles(1.0 / math.sqrt(80.0)),
            Observable.total_energy("henon-heiles", 1.0 / math.sqrt(80.0)),
        ],
        ids=lambda o: o.label() + str(o.index or ""),
    )
    def test_gradient_matches_finite_differences(self, obs, rng):
        eps = 0.8
        psi0 = packet([1.0, -0.4], [0.5, 1.0], eps=eps)
        spec = DensitySpec("optimal", psi0, obs)
        w0 = np.concatenate([psi0.center.as_vector()] * 2)
        pts = w0 + rng.standard_normal((100, 8))
        grad = optimal_potential_gradient(spec, pts)
        h = 1e-6
        for k in range(8):
            pp, pm = pts.copy(), pts.copy()
            pp[:, k] += h
            pm[:, k] -= h
            fd = (optimal_potential(spec, pp) - optimal_potential(spec, pm)) / (2 * h)
            np.testing.assert_allclose(grad[:, k], fd, rtol=1e-5, atol=1e-5)

    def test_potential_matches_density(self, rng):
        # exp(-U) must reproduce the unnormalized density used everywhere else
        psi0 = packet([0.3], [0.7], eps=0.6)
        spec = DensitySpec("optimal", psi0, Observable.momentum_sq(1))
        pts = rng.standard_normal((20, 4))
        np.testing.assert_allclose(
            -optimal_potential(spec, pts), log_density_unnormalized(spec, pts), rtol=1e-12
        )


class TestHmcSampling:
    def test_param_validation(self):
        with pytest.raises(ValueError):
            HmcParams(n_leapfrog=0)
        with pytest.raises(ValueError):
            HmcParams(step_size=-0.1)
        with pytest.raises(ValueError):
            HmcParams(burn_in=-1)
        with pytest.raises(ValueError):
            HmcParams(n_chains=0)

    def test_reproducible_and_acceptance(self):
        spec = DensitySpec("optimal", packet([1.0], [1.0]), Observable.identity())
        a = hmc_sample(spec, HmcParams(), 2000, seed=13)
        b = hmc_sample(spec, HmcParams(), 2000, seed=13)
        np.testing.assert_array_equal(a.points, b.points)
        assert a.acceptance == b.acceptance
        assert a.acceptance > 0.5

    def test_mean_converges_to_center(self):
        spec = DensitySpec("optimal", packet([1.0], [1.0]), Observable.identity())
        batch = hmc_sample(spec, HmcParams(), 100_000, seed=14)
        # marginal std is sqrt(4/3); 3 sigma band on the mean, inflated for correlation
        band = 3.0 * math.sqrt(4.0 / 3.0) / math.sqrt(batch.n) * 3.0
        np.testing.assert_allclose(batch.points.mean(axis=0), np.ones(4), atol=band)

    def test_matches_direct_sampling_distribution(self):
        spec = DensitySpec("optimal", packet([1.0], [1.0]), Observable.identity())
        hmc = hmc_sample(spec, HmcParams(), 100_000, seed=15)
        direct = direct_sample(spec, 100_000, seed=16)
        for k in range(4):
            res = stats.ks_2samp(hmc.points[:, k], direct.points[:, k])
            assert res.pvalue > 0.01 / 4.0

    def test_requires_optimal_density(self):
        spec = DensitySpec("sqrt-husimi", packet([0.0], [0.0]))
        with pytest.raises(CapabilityError):
            hmc_sample(spec, HmcParams(), 100, seed=0)

    def test_wis_position_sampling_runs(self):
        # the |Pol| = 0 manifold of q_1 splits the target; chains must still mix
        spec = DensitySpec("optimal", packet([1.0], [1.0]), Observable.position(1))
        batch = hmc_sample(spec, HmcParams(burn_in=300), 20_000, seed=17)
        assert batch.acceptance > 0.5
        assert np.all(np.isfinite(batch.log_density))
