"""Value types, Gaussian evaluation, and the phase-space width matrix."""

import mpmath
import numpy as np
import pytest

from hk_expect import (
    GaussianWavepacket,
    PhaseSpacePoint,
    DoublePhasePoint,
    Observable,
    SimConfig,
    WidthMatrix,
    gaussian_eval,
    sigma0,
)


def make_packet(q, p, gamma, eps):
    q = np.atleast_1d(np.asarray(q, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    return GaussianWavepacket(
        PhaseSpacePoint(q, p), WidthMatrix(np.atleast_2d(gamma)), SimConfig(q.size, eps)
    )


class TestValueTypes:
    def test_sim_config_validation(self):
        with pytest.raises(ValueError):
            SimConfig(0, 1.0)
        with pytest.raises(ValueError):
            SimConfig(2, 0.0)

    def test_point_dimension_mismatch(self):
        with pytest.raises(ValueError):
            PhaseSpacePoint(np.zeros(2), np.zeros(3))
        with pytest.raises(ValueError):
            PhaseSpacePoint(np.array([np.inf]), np.array([0.0]))

    def test_double_point_roundtrip(self):
        w = DoublePhasePoint(
            PhaseSpacePoint(np.array([1.0, 2.0]), np.array([3.0, 4.0])),
            PhaseSpacePoint(np.array([5.0, 6.0]), np.array([7.0, 8.0])),
        )
        assert w.dim == 2
        assert DoublePhasePoint.from_vector(w.as_vector()) == w

    def test_double_point_mixed_dims_rejected(self):
        with pytest.raises(ValueError):
            DoublePhasePoint(
                PhaseSpacePoint(np.zeros(1), np.zeros(1)),
                PhaseSpacePoint(np.zeros(2), np.zeros(2)),
            )

    def test_width_matrix_rejects_non_spd(self):
        with pytest.raises(ValueError):
            WidthMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]))  # eigenvalue -1
        with pytest.raises(ValueError):
            WidthMatrix(np.array([[1.0, 0.5], [0.0, 1.0]]))  # not symmetric

    def test_observable_validation(self):
        with pytest.raises(ValueError):
            Observable("position")  # missing index
        with pytest.raises(ValueError):
            Observable("potential", potential="henon-heiles")  # missing sigma
        obs = Observable.position(3)
        with pytest.raises(ValueError):
            obs.check_index(2)


class TestGaussianEval:
    def test_prefactor_at_center(self):
        g = make_packet(0.0, 0.0, 1.0, 1.0)
        assert gaussian_eval(g, [0.0]) == pytest.approx((1.0 / np.pi) ** 0.25)

    def test_momentum_phase_vanishes_at_center(self):
        # p (x - q) = 0 at x = q, so the value is the bare prefactor
        g = make_packet(0.0, 1.0, 1.0, 1.0)
        val = gaussian_eval(g, [0.0])
        assert val.imag == 0.0
        assert val.real == pytest.approx((1.0 / np.pi) ** 0.25)

    def test_dimension_mismatch(self):
        g = make_packet(0.0, 0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            gaussian_eval(g, [0.0, 1.0])

    def test_matches_extended_precision(self, rng):
        # D=2, full SPD width, random center/argument vs a 50-digit evaluation
        mpmath.mp.dps = 50
        gamma = np.array([[1.0, 0.3], [0.3, 2.0]])
        eps = 0.5
        q = rng.standard_normal(2)
        p = rng.standard_normal(2)
        x = rng.standard_normal(2)
        g = make_packet(q, p, gamma, eps)
        got = gaussian_eval(g, x)

        gm = mpmath.matrix(gamma.tolist())
        dx = mpmath.matrix((x - q).tolist())
        quad = (dx.T * gm * dx)[0, 0]
        phase = mpmath.mpf(float(p @ (x - q)))
        det = mpmath.det(gm)
        pref = (det / (mpmath.pi * eps) ** 2) ** mpmath.mpf("0.25")
        want = pref * mpmath.e ** (-quad / (2 * eps) + 1j * phase / eps)
        assert got.real == pytest.approx(float(want.real), rel=1e-12)
        assert got.imag == pytest.approx(float(want.imag), rel=1e-12)

    @pytest.mark.parametrize(
        "gamma,eps",
        [(np.array([[1.0]]), 1.0), (np.array([[2.5]]), 0.3), (np.array([[1.0, 0.4], [0.4, 2.0]]), 0.7)],
    )
    def test_unit_norm(self, gamma, eps, rng):
        dim = gamma.shape[0]
        q = rng.standard_normal(dim)
        p = rng.standard_normal(dim)
        g = make_packet(q, p, gamma, eps)
        lam_min = np.linalg.eigvalsh(gamma)[0]
        half = 8.0 * np.sqrt(eps / lam_min)
        n = 1201 if dim == 1 else 501
        axes = [np.linspace(qi - half, qi + half, n) for qi in q]
        if dim == 1:
            vals = np.array([abs(gaussian_eval(g, [x])) ** 2 for x in axes[0]])
            norm = np.trapezoid(vals, axes[0])
        else:
            x1, x2 = np.meshgrid(axes[0], axes[1], indexing="ij")
            pts = np.stack([x1.ravel(), x2.ravel()], axis=1)
            dx = pts - q
            quad = np.einsum("ni,ij,nj->n", dx, gamma, dx)
            dens = np.sqrt(np.linalg.det(gamma) / (np.pi * eps) ** dim) * np.exp(-quad / eps)
            inner = np.trapezoid(dens.reshape(n, n), axes[1], axis=1)
            norm = np.trapezoid(inner, axes[0])
        assert norm == pytest.approx(1.0, abs=1e-8)


class TestSigma0:
    def test_identity(self):
        np.testing.assert_array_equal(sigma0(WidthMatrix.identity(3)), np.eye(6))

    def test_diagonal_inverse(self):
        s = sigma0(WidthMatrix.from_diagonal([2.0]))
        np.testing.assert_allclose(s, np.diag([2.0, 0.5]))

    def test_full_spd_multiply_back(self, rng):
        a = rng.standard_normal((2, 2))
        gamma = a @ a.T + 2.0 * np.eye(2)
        width = WidthMatrix(gamma)
        s = sigma0(width)
        other = np.zeros((4, 4))
        other[:2, :2] = np.linalg.inv(gamma)
        other[2:, 2:] = gamma
        np.testing.assert_allclose(s @ other, np.eye(4), atol=1e-12)

    def test_spd_preserved(self, rng):
        for _ in range(20):
            a = rng.standard_normal((3, 3))
            width = WidthMatrix(a @ a.T + 3.0 * np.eye(3))
            s = sigma0(width)
            np.testing.assert_allclose(s, s.T)
            assert np.linalg.eigvalsh(s)[0] > 0


class TestObservableLabels:
    def test_labels(self):
        assert Observable.identity().label() == "Id"
        assert Observable.position(2).label() == "q2"
        assert Observable.momentum_sq(1).label() == "p1sq"
        assert Observable.kinetic().label() == "T"
        assert Observable.potential_henon_heiles(0.1).label() == "V"
        assert Observable.total_energy("harmonic").label() == "E"
