"""Shared independent oracles for the test suite.

Everything here deliberately re-derives results from the defining
integrals or textbook moment formulas, without touching the package's
closed forms, so agreement is evidence rather than tautology.
"""

import numpy as np
import pytest


def gaussian_on_grid(x, q, p, gamma, eps):
    """Frozen Gaussian g_{(q,p)}(x) on a 1-d grid, written out directly."""
    pref = (gamma / (np.pi * eps)) ** 0.25
    return pref * np.exp(-gamma * (x - q) ** 2 / (2 * eps) + 1j * p * (x - q) / eps)


def observable_action_1d(kind, x, q, p, gamma, eps, index=None):
    """(A g_z)(x) / g_z(x) for the supported one-dimensional operators."""
    if kind == "identity":
        return np.ones_like(x, dtype=complex)
    if kind == "position":
        return x.astype(complex)
    if kind == "position_sq":
        return (x**2).astype(complex)
    if kind == "momentum":
        return p + 1j * gamma * (x - q)
    if kind == "momentum_sq":
        return (p + 1j * gamma * (x - q)) ** 2 + eps * gamma
    if kind == "kinetic":
        return 0.5 * ((p + 1j * gamma * (x - q)) ** 2 + eps * gamma)
    if kind == "potential":  # harmonic in 1-d
        return 0.5 * (x**2).astype(complex)
    if kind == "total_energy":
        return 0.5 * ((p + 1j * gamma * (x - q)) ** 2 + eps * gamma) + 0.5 * x**2
    raise ValueError(kind)


def grid_matel_1d(kind, y, z, gamma, eps, n_points=20001):
    """<g_y, A g_z> for D=1 by direct trapezoid quadrature of the integral."""
    qy, py = y
    qz, pz = z
    center = 0.5 * (qy + qz)
    half = 10.0 * np.sqrt(eps / gamma) + abs(qy - qz)
    x = np.linspace(center - half, center + half, n_points)
    integrand = (
        np.conj(gaussian_on_grid(x, qy, py, gamma, eps))
        * observable_action_1d(kind, x, qz, pz, gamma, eps)
        * gaussian_on_grid(x, qz, pz, gamma, eps)
    )
    return np.trapezoid(integrand, x)


def henon_heiles_value_2d(x1, x2, sigma):
    return (
        0.5 * (x1**2 + x2**2)
        + sigma * (x1 * x2**2 - x1**3 / 3.0)
        + sigma**2 / 16.0 * (x1**2 + x2**2) ** 2
    )


def grid_matel_henon_heiles_2d(y, z, gammas, eps, sigma, n_points=400):
    """<g_y, V_HH g_z> for D=2 on a tensor grid (trapezoid in each axis)."""
    qy, py = y  # each length-2 arrays
    qz, pz = z
    vals = []
    axes = []
    for j in range(2):
        center = 0.5 * (qy[j] + qz[j])
        half = 8.0 * np.sqrt(eps / gammas[j]) + abs(qy[j] - qz[j])
        axes.append(np.linspace(center - half, center + half, n_points))
    x1, x2 = np.meshgrid(axes[0], axes[1], indexing="ij")
    integrand = np.ones_like(x1, dtype=complex)
    for j, xg in enumerate((x1, x2)):
        integrand *= np.conj(gaussian_on_grid(xg, qy[j], py[j], gammas[j], eps))
        integrand *= gaussian_on_grid(xg, qz[j], pz[j], gammas[j], eps)
    integrand *= henon_heiles_value_2d(x1, x2, sigma)
    inner = np.trapezoid(integrand, axes[1], axis=1)
    return np.trapezoid(inner, axes[0])


def harmonic_action(z0, t):
    """Classical action along the exact harmonic trajectory, via the closed integral.

    L(s) = |p(s)|^2/2 - |q(s)|^2/2 integrates to
    sum_j [ (p_j^2-q_j^2) sin(2t)/4 + p_j q_j (cos(2t)-1)/2 ].
    """
    q, p = z0
    return float(
        np.sum(0.25 * (p**2 - q**2) * np.sin(2 * t) + 0.5 * p * q * (np.cos(2 * t) - 1.0))
    )


def gaussian_expected_henon_heiles(q0, eps, sigma):
    """E[V_HH(X)] for X ~ N(q0, (eps/2) Id), from textbook Gaussian moments."""
    q0 = np.asarray(q0, dtype=float)
    s2 = eps / 2.0  # per-axis variance of |g|^2 for unit width
    ex2 = q0**2 + s2
    ex3 = q0**3 + 3.0 * q0 * s2
    ex4 = q0**4 + 6.0 * q0**2 * s2 + 3.0 * s2**2
    v = 0.5 * np.sum(ex2)
    a, b = slice(None, -1), slice(1, None)
    v += sigma * np.sum(q0[a] * ex2[b] - ex3[a] / 3.0)
    v += sigma**2 / 16.0 * np.sum(ex4[a] + 2.0 * ex2[a] * ex2[b] + ex4[b])
    return float(v)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
