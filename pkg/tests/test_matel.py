"""Closed-form matrix elements against direct quadrature of the defining integrals."""

import math

import numpy as np
import pytest
from conftest import (
    gaussian_expected_henon_heiles,
    grid_matel_1d,
    grid_matel_henon_heiles_2d,
)

from hk_expect import (
    CapabilityError,
    GaussianWavepacket,
    Observable,
    PhaseSpacePoint,
    SimConfig,
    WidthMatrix,
    matel,
    overlap,
    total_energy_expectation,
)
from hk_expect.matel import matel_batch, overlap_batch, polynomial_batch

HH_SIGMA = 1.0 / math.sqrt(80.0)

ALL_1D = [
    Observable.identity(),
    Observable.position(1),
    Observable.position_sq(1),
    Observable.momentum(1),
    Observable.momentum_sq(1),
    Observable.kinetic(),
    Observable.potential_harmonic(),
    Observable.total_energy("harmonic"),
]

ALL_3D = ALL_1D[:1] + [
    Observable.position(2),
    Observable.position_sq(3),
    Observable.momentum(1),
    Observable.momentum_sq(2),
    Observable.kinetic(),
    Observable.potential_harmonic(),
    Observable.potential_henon_heiles(0.3),
    Observable.total_energy("henon-heiles", 0.3),
]


def point(q, p):
    return PhaseSpacePoint(np.atleast_1d(np.asarray(q, float)), np.atleast_1d(np.asarray(p, float)))


class TestOverlap:
    def test_identical_gaussians(self):
        z = point([0.3, -1.2], [0.7, 0.1])
        assert overlap(z, z, WidthMatrix.identity(2), 0.7) == pytest.approx(1.0)

    def test_pure_position_shift(self):
        w = WidthMatrix.identity(1)
        val = overlap(point(0.0, 0.0), point(2.0, 0.0), w, 1.0)
        assert val == pytest.approx(math.exp(-1.0))
        assert val.imag == 0.0

    def test_pure_momentum_shift(self):
        w = WidthMatrix.identity(1)
        val = overlap(point(0.0, 0.0), point(0.0, 2.0), w, 1.0)
        assert val == pytest.approx(math.exp(-1.0))

    def test_magnitude_bounded_by_one(self, rng):
        w = WidthMatrix(np.array([[1.5, 0.2], [0.2, 0.8]]))
        for _ in range(50):
            y = point(rng.standard_normal(2), rng.standard_normal(2))
            z = point(rng.standard_normal(2), rng.standard_normal(2))
            assert abs(overlap(y, z, w, 0.5)) <= 1.0 + 1e-12


class TestMatelValues:
    def test_position_diagonal(self):
        z = point([0.4, -2.0], [1.3, 0.2])
        res = matel(Observable.position(1), z, z, WidthMatrix.identity(2), 1.0)
        assert res.value == pytest.approx(0.4)
        assert res.overlap == pytest.approx(1.0)

    def test_momentum_sq_diagonal(self):
        z = point(0.0, 1.0)
        res = matel(Observable.momentum_sq(1), z, z, WidthMatrix.identity(1), 1.0)
        assert res.value == pytest.approx(1.5)  # (2 eps + (2p)^2)/4

    def test_identity_value_equals_overlap(self, rng):
        w = WidthMatrix.from_diagonal([1.0, 2.0])
        y = point(rng.standard_normal(2), rng.standard_normal(2))
        z = point(rng.standard_normal(2), rng.standard_normal(2))
        res = matel(Observable.identity(), y, z, w, 0.5)
        assert res.value == res.overlap

    def test_hermitian_symmetry(self, rng):
        w = WidthMatrix.from_diagonal([0.7, 1.4, 2.0])
        eps = 0.35
        for obs in ALL_3D:
            for _ in range(10):
                y = point(rng.standard_normal(3), rng.standard_normal(3))
                z = point(rng.standard_normal(3), rng.standard_normal(3))
                a = matel(obs, y, z, w, eps).value
                b = matel(obs, z, y, w, eps).value
                assert a == pytest.approx(np.conj(b), abs=1e-12 * max(1.0, abs(a)))

    def test_diagonal_realness_and_positivity(self, rng):
        w = WidthMatrix.from_diagonal([0.7, 1.4, 2.0])
        for obs in (Observable.position_sq(2), Observable.momentum_sq(3)):
            for _ in range(20):
                z = point(rng.standard_normal(3), rng.standard_normal(3))
                val = matel(obs, z, z, w, 0.8).value
                assert abs(val.imag) <= 1e-12
                assert val.real > 0

    def test_factorization_matches_polynomial(self, rng):
        w = WidthMatrix.from_diagonal([0.7, 1.4, 2.0])
        eps = 0.6
        for obs in ALL_3D:
            for _ in range(10):
                y = point(rng.standard_normal(3), rng.standard_normal(3))
                z = point(rng.standard_normal(3), rng.standard_normal(3))
                res = matel(obs, y, z, w, eps)
                pol = complex(polynomial_batch(obs, y.q, y.p, z.q, z.p, w, eps))
                assert res.value == pytest.approx(pol * res.overlap, rel=1e-10)

    def test_henon_heiles_needs_diagonal_width(self):
        w = WidthMatrix(np.array([[1.0, 0.2], [0.2, 1.0]]))
        y = point([0.0, 0.0], [0.0, 0.0])
        with pytest.raises(CapabilityError):
            matel(Observable.potential_henon_heiles(0.1), y, y, w, 1.0)


class TestGridOracles:
    @pytest.mark.parametrize("obs", ALL_1D, ids=lambda o: o.label() + (o.potential or ""))
    def test_matches_quadrature_1d(self, obs, rng):
        gamma = 1.3
        eps = 0.8
        w = WidthMatrix.from_diagonal([gamma])
        for _ in range(100):
            y = rng.standard_normal(2)
            z = rng.standard_normal(2)
            want = grid_matel_1d(obs.kind, y, z, gamma, eps)
            got = matel(obs, point(*y), point(*z), w, eps).value
            assert got == pytest.approx(want, rel=1e-6)

    def test_henon_heiles_matches_quadrature_2d(self, rng):
        eps = 0.01
        gammas = np.array([1.0, 1.0])
        w = WidthMatrix.from_diagonal(gammas)
        obs = Observable.potential_henon_heiles(HH_SIGMA)
        q0 = np.array([1.0, 1.0])
        for _ in range(100):
            qy = q0 + math.sqrt(eps) * rng.standard_normal(2)
            qz = q0 + math.sqrt(eps) * rng.standard_normal(2)
            py = math.sqrt(eps) * rng.standard_normal(2)
            pz = math.sqrt(eps) * rng.standard_normal(2)
            want = grid_matel_henon_heiles_2d((qy, py), (qz, pz), gammas, eps, HH_SIGMA)
            got = matel(obs, point(qy, py), point(qz, pz), w, eps).value
            assert got == pytest.approx(want, rel=1e-6)

    def test_henon_heiles_nonunit_diagonal_width(self, rng):
        # gate the entrywise Gamma^-1 terms against the same quadrature
        eps = 0.05
        gammas = np.array([0.8, 1.6])
        w = WidthMatrix.from_diagonal(gammas)
        obs = Observable.potential_henon_heiles(0.2)
        for _ in range(20):
            qy = rng.standard_normal(2) * 0.4
            qz = rng.standard_normal(2) * 0.4
            py = rng.standard_normal(2) * 0.2
            pz = rng.standard_normal(2) * 0.2
            want = grid_matel_henon_heiles_2d((qy, py), (qz, pz), gammas, eps, 0.2)
            got = matel(obs, point(qy, py), point(qz, pz), w, eps).value
            assert got == pytest.approx(want, rel=1e-6)


class TestTotalEnergy:
    def test_harmonic_d5_coherent(self):
        dim = 5
        psi0 = GaussianWavepacket(
            point(np.ones(dim), np.ones(dim)), WidthMatrix.identity(dim), SimConfig(dim, 1.0)
        )
        assert total_energy_expectation(psi0, "harmonic") == pytest.approx(6 * dim / 4)

    @pytest.mark.parametrize("dim", [1, 3, 7])
    def test_harmonic_ground_state(self, dim):
        psi0 = GaussianWavepacket(
            point(np.zeros(dim), np.zeros(dim)), WidthMatrix.identity(dim), SimConfig(dim, 1.0)
        )
        assert total_energy_expectation(psi0, "harmonic") == pytest.approx(dim / 2)

    def test_henon_heiles_d6_vs_moment_oracle(self):
        dim, eps = 6, 0.01
        q0 = np.ones(dim)
        psi0 = GaussianWavepacket(
            point(q0, np.zeros(dim)), WidthMatrix.identity(dim), SimConfig(dim, eps)
        )
        got = total_energy_expectation(psi0, "henon-heiles", HH_SIGMA)
        want = gaussian_expected_henon_heiles(q0, eps, HH_SIGMA) + dim * eps / 4.0
        assert got == pytest.approx(want, rel=1e-12)


class TestBatchedConsistency:
    def test_batch_matches_scalar(self, rng):
        w = WidthMatrix.from_diagonal([1.0, 0.5])
        eps = 0.4
        qy, py = rng.standard_normal((2, 8, 2))
        qz, pz = rng.standard_normal((2, 8, 2))
        for obs in (Observable.position_sq(2), Observable.kinetic()):
            batch = matel_batch(obs, qy, py, qz, pz, w, eps)
            for i in range(8):
                single = matel(obs, point(qy[i], py[i]), point(qz[i], pz[i]), w, eps).value
                assert batch[i] == pytest.approx(single)

    def test_overlap_batch_shapes(self, rng):
        w = WidthMatrix.identity(3)
        qy, py, qz, pz = rng.standard_normal((4, 5, 3))
        out = overlap_batch(qy, py, qz, pz, w, 1.0)
        assert out.shape == (5,)
