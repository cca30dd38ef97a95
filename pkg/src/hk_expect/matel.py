"""Closed-form matrix elements <g_y, A g_z> between frozen Gaussians.

Every supported operator factorizes as

    <g_y, A g_z> = Pol(y, z) * <g_y, g_z>,

where Pol is a polynomial in the combinations

    v = (q_y + q_z) + i Gamma^-1 (p_z - p_y)      (position-type operators)
    u = (p_y + p_z) + i Gamma   (q_y - q_z)       (momentum-type operators)

All functions come in a batched flavour operating on (n, D) coordinate
arrays; the scalar wrappers accept PhaseSpacePoint values.  The
Henon-Heiles polynomial requires a diagonal width matrix (its moment
formulas use Gamma^-1 entrywise).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GaussianWavepacket, Observable, PhaseSpacePoint, WidthMatrix
from .errors import CapabilityError

__all__ = [
    "MatElResult",
    "overlap",
    "overlap_batch",
    "matel",
    "matel_batch",
    "polynomial_batch",
    "total_energy_expectation",
]


@dataclass(frozen=True)
class MatElResult:
    """Matrix element value together with the bare overlap factor it contains."""

    value: complex
    overlap: complex


def _split(arr, dim):
    a = np.asarray(arr, dtype=float)
    if a.shape[-1] != 2 * dim:
        raise ValueError(f"expected trailing length {2 * dim}, got {a.shape[-1]}")
    return a[..., :dim], a[..., dim:]


def overlap_batch(qy, py, qz, pz, width: WidthMatrix, eps: float) -> np.ndarray:
    """<g_y, g_z> for batches of centers, shape (...,) complex.

    exp{[-1/4 (y-z)' Sigma0 (y-z) + i/2 (p_y+p_z)'(q_y-q_z)] / eps}
    with Sigma0 = diag(Gamma, Gamma^-1).
    """
    dq = qy - qz
    dp = py - pz
    quad = np.einsum("...i,ij,...j", dq, width.matrix, dq) + np.einsum(
        "...i,ij,...j", dp, width.inverse, dp
    )
    phase = 0.5 * np.einsum("...i,...i", py + pz, dq)
    return np.exp((-0.25 * quad + 1j * phase) / eps)


def _v_combination(qy, py, qz, pz, width: WidthMatrix) -> np.ndarray:
    """(q_y + q_z) + i Gamma^-1 (p_z - p_y), shape (..., D) complex."""
    return (qy + qz) + 1j * np.einsum("ij,...j->...i", width.inverse, pz - py)


def _u_combination(qy, py, qz, pz, width: WidthMatrix) -> np.ndarray:
    """(p_y + p_z) + i Gamma (q_y - q_z), shape (..., D) complex."""
    return (py + pz) + 1j * np.einsum("ij,...j->...i", width.matrix, qy - qz)


def _henon_heiles_polynomial(v, giv, eps, sigma):
    """Pol for the modified Henon-Heiles potential; giv = diag(Gamma^-1)."""
    quad = 2.0 * eps * giv + v**2                       # [2 eps G^-1 + v^2]_j
    quart = v**4 + 12.0 * eps * giv * v**2 + 12.0 * (eps * giv) ** 2
    p = np.sum(quad, axis=-1) / 8.0
    if v.shape[-1] >= 2:
        vj, vj1 = v[..., :-1], v[..., 1:]
        quadj, quadj1 = quad[..., :-1], quad[..., 1:]
        givj = giv[:-1]
        cubic = (vj / 2.0) * (quadj1 / 4.0) - (vj**3 + 6.0 * eps * givj * vj) / 24.0
        p = p + sigma * np.sum(cubic, axis=-1)
        quartic = quadj * quadj1 / 8.0 + (quart[..., :-1] + quart[..., 1:]) / 16.0
        p = p + (sigma**2 / 16.0) * np.sum(quartic, axis=-1)
    return p


def polynomial_batch(obs: Observable, qy, py, qz, pz, width: WidthMatrix, eps: float) -> np.ndarray:
    """Pol(y, z) = <g_y, A g_z> / <g_y, g_z> for batches of centers."""
    dim = width.dim
    obs.check_index(dim)
    kind = obs.kind
    if kind == "identity":
        shape = np.broadcast_shapes(np.shape(qy)[:-1], np.shape(qz)[:-1])
        return np.ones(shape, dtype=complex)
    if kind in ("position", "position_sq"):
        v = _v_combination(qy, py, qz, pz, width)
        j = obs.index - 1
        if kind == "position":
            return 0.5 * v[..., j]
        return (2.0 * eps * width.inverse[j, j] + v[..., j] ** 2) / 4.0
    if kind in ("momentum", "momentum_sq"):
        u = _u_combination(qy, py, qz, pz, width)
        j = obs.index - 1
        if kind == "momentum":
            return 0.5 * u[..., j]
        return (2.0 * eps * width.matrix[j, j] + u[..., j] ** 2) / 4.0
    if kind == "kinetic":
        u = _u_combination(qy, py, qz, pz, width)
        return np.sum(2.0 * eps * np.diag(width.matrix) + u**2, axis=-1) / 8.0
    if kind == "potential" and obs.potential == "harmonic":
        v = _v_combination(qy, py, qz, pz, width)
        return np.sum(2.0 * eps * np.diag(width.inverse) + v**2, axis=-1) / 8.0
    if kind == "potential":  # henon-heiles
        if not width.is_diagonal:
            raise CapabilityError("Henon-Heiles matrix elements require a diagonal width matrix")
        v = _v_combination(qy, py, qz, pz, width)
        return _henon_heiles_polynomial(v, np.diag(width.inverse), eps, obs.sigma)
    if kind == "total_energy":
        pot = Observable("potential", potential=obs.potential, sigma=obs.sigma)
        return polynomial_batch(Observable.kinetic(), qy, py, qz, pz, width, eps) + polynomial_batch(
            pot, qy, py, qz, pz, width, eps
        )
    raise CapabilityError(f"unsupported observable kind {kind!r}")


def matel_batch(obs: Observable, qy, py, qz, pz, width: WidthMatrix, eps: float) -> np.ndarray:
    return polynomial_batch(obs, qy, py, qz, pz, width, eps) * overlap_batch(
        qy, py, qz, pz, width, eps
    )


# -- scalar wrappers --------------------------------------------------------

def overlap(y: PhaseSpacePoint, z: PhaseSpacePoint, width: WidthMatrix, eps: float) -> complex:
    """<g_y, g_z> for two frozen Gaussians sharing Gamma and eps."""
    if y.dim != z.dim or y.dim != width.dim:
        raise ValueError("y, z and the width matrix must share the dimension")
    return complex(overlap_batch(y.q, y.p, z.q, z.p, width, eps))


def matel(obs: Observable, y: PhaseSpacePoint, z: PhaseSpacePoint, width: WidthMatrix, eps: float) -> MatElResult:
    """<g_y, A g_z> via the closed forms, returned with the bare overlap."""
    if y.dim != z.dim or y.dim != width.dim:
        raise ValueError("y, z and the width matrix must share the dimension")
    ov = complex(overlap_batch(y.q, y.p, z.q, z.p, width, eps))
    pol = complex(polynomial_batch(obs, y.q, y.p, z.q, z.p, width, eps))
    return MatElResult(value=pol * ov, overlap=ov)


def total_energy_expectation(psi0: GaussianWavepacket, potential: str, sigma: float | None = None) -> float:
    """<psi0, (T + V) psi0> for a Gaussian initial state, from the closed forms.

    The diagonal matrix element of a self-adjoint operator is real; the
    imaginary residue is checked against 1e-12.
    """
    obs = Observable.total_energy(potential, sigma)
    res = matel(obs, psi0.center, psi0.center, psi0.width, psi0.epsilon)
    if abs(res.value.imag) > 1e-12:
        raise CapabilityError(f"total energy came out non-real ({res.value.imag:g}); check inputs")
    return float(res.value.real)
