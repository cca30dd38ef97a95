"""Double phase-space sample generation for the three sampling densities.

For a Gaussian initial state g_{z0} all three densities have closed forms:
the Husimi and sqrt-Husimi products are Gaussians on each single phase
space (covariances eps*Sigma0^-1 and 2*eps*Sigma0^-1), and the
observable-optimal density for the identity operator is a correlated
Gaussian on the full double phase space.  Those cases are drawn directly;
every other optimal density is sampled by Hamiltonian Monte Carlo on the
potential U = -log rho_opt (known up to a constant), with analytic
gradients obtained from the polynomial factor of the matrix element.

RNG streams are counter-based (numpy Philox keyed by SeedSequence), and
all draws happen in a fixed order, so batches depend only on
(spec, params, n, seed) and never on how later work is parallelized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GaussianWavepacket, Observable, WidthMatrix
from .errors import CapabilityError, SamplerError
from .matel import polynomial_batch

__all__ = [
    "DensitySpec",
    "HmcParams",
    "SampleBatch",
    "density_eval_unnormalized",
    "log_density_unnormalized",
    "direct_sample",
    "hmc_sample",
    "make_rng",
    "optimal_potential",
    "optimal_potential_gradient",
]

_DENSITY_KINDS = ("husimi", "sqrt-husimi", "optimal")


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for a (seed, purpose...) stream; deterministic and independent."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class DensitySpec:
    """Which double phase-space density to sample, anchored at the initial Gaussian."""

    kind: str
    psi0: GaussianWavepacket
    observable: Observable | None = None

    def __post_init__(self):
        if self.kind not in _DENSITY_KINDS:
            raise ValueError(f"density kind must be one of {_DENSITY_KINDS}, got {self.kind!r}")
        if self.kind == "optimal":
            if self.observable is None:
                raise ValueError("optimal density needs the observable it is built from")
            self.observable.check_index(self.psi0.dim)
            if self.observable.kind != "identity" and not self.psi0.width.is_identity:
                raise CapabilityError(
                    "optimal density for a non-identity observable requires unit width matrix"
                )
        elif self.observable is not None:
            raise ValueError(f"{self.kind} density takes no observable")

    @property
    def dim(self) -> int:
        return self.psi0.dim

    def label(self) -> str:
        if self.kind == "optimal":
            return f"optimal({self.observable.label()})"
        return self.kind


@dataclass(frozen=True)
class HmcParams:
    """Tuning knobs of the Hamiltonian Monte Carlo chain.

    step_size defaults to 0.1*sqrt(eps) when left None.  Several
    independent chains are propagated in lockstep (each sequential);
    n_chains is part of the reproducibility key of a batch.
    """

    step_size: float | None = None
    n_leapfrog: int = 10
    mass: float = 1.0
    burn_in: int = 1000
    n_chains: int = 64

    def __post_init__(self):
        if self.step_size is not None and not (self.step_size > 0):
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if not isinstance(self.n_leapfrog, (int, np.integer)) or self.n_leapfrog < 1:
            raise ValueError(f"n_leapfrog must be a positive integer, got {self.n_leapfrog}")
        if not (self.mass > 0):
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not isinstance(self.burn_in, (int, np.integer)) or self.burn_in < 0:
            raise ValueError(f"burn_in must be >= 0, got {self.burn_in}")
        if not isinstance(self.n_chains, (int, np.integer)) or self.n_chains < 1:
            raise ValueError(f"n_chains must be a positive integer, got {self.n_chains}")


@dataclass(frozen=True)
class SampleBatch:
    """N double phase-space samples with their (unnormalized) log density values."""

    points: np.ndarray          # (N, 4D)
    spec: DensitySpec
    log_density: np.ndarray     # (N,), log of the unnormalized density at each point
    seed: int
    acceptance: float | None = None   # HMC only

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 4 * self.spec.dim:
            raise ValueError(f"points must have shape (N, {4*self.spec.dim}), got {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("a sample batch needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("sample batch contains non-finite points")
        if self.acceptance is not None and not (0.0 <= self.acceptance <= 1.0):
            raise ValueError(f"acceptance rate must lie in [0, 1], got {self.acceptance}")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def split(self):
        """(q_y, p_y, q_z, p_z) views, each (N, D)."""
        d = self.spec.dim
        w = self.points
        return w[:, :d], w[:, d : 2 * d], w[:, 2 * d : 3 * d], w[:, 3 * d :]


# ---------------------------------------------------------------------------
# Density evaluation
# ---------------------------------------------------------------------------

def _single_phase_quad(x, center, width: WidthMatrix):
    """(x - center)' Sigma0 (x - center) for x of shape (..., 2D)."""
    d = width.dim
    dq = x[..., :d] - center[:d]
    dp = x[..., d:] - center[d:]
    return np.einsum("...i,ij,...j", dq, width.matrix, dq) + np.einsum(
        "...i,ij,...j", dp, width.inverse, dp
    )


def log_density_unnormalized(spec: DensitySpec, w) -> np.ndarray:
    """Log of the unnormalized density at points w of shape (..., 4D).

    The proportionality constant is fixed per spec: the exponentials carry
    no prefactor, and the optimal density includes log|Pol|, which is -inf
    where the polynomial factor vanishes.
    """
    w = np.asarray(w, dtype=float)
    d = spec.dim
    if w.shape[-1] != 4 * d:
        raise ValueError(f"points must have trailing length {4*d}, got {w.shape[-1]}")
    width = spec.psi0.width
    eps = spec.psi0.epsilon
    z0 = spec.psi0.center.as_vector()
    y = w[..., : 2 * d]
    z = w[..., 2 * d :]
    quad = _single_phase_quad(y, z0, width) + _single_phase_quad(z, z0, width)
    if spec.kind == "husimi":
        return -quad / (2.0 * eps)
    if spec.kind == "sqrt-husimi":
        return -quad / (4.0 * eps)
    # optimal: |<psi0,g_y><g_z,psi0>| * |<g_y, A g_z>|
    dyz = y - z
    quad = quad + np.einsum("...i,ij,...j", dyz[..., :d], width.matrix, dyz[..., :d])
    quad = quad + np.einsum("...i,ij,...j", dyz[..., d:], width.inverse, dyz[..., d:])
    pol = polynomial_batch(
        spec.observable, y[..., :d], y[..., d:], z[..., :d], z[..., d:], width, eps
    )
    with np.errstate(divide="ignore"):
        return -quad / (4.0 * eps) + np.log(np.abs(pol))


def density_eval_unnormalized(spec: DensitySpec, w) -> np.ndarray:
    """Unnormalized density value(s), >= 0; exactly 0 where the density vanishes."""
    return np.exp(log_density_unnormalized(spec, w))


# ---------------------------------------------------------------------------
# Direct Gaussian sampling
# ---------------------------------------------------------------------------

def _sigma0_inv_factor(width: WidthMatrix) -> np.ndarray:
    """Block-diagonal L with L L' = Sigma0^-1 = diag(Gamma^-1, Gamma)."""
    d = width.dim
    out = np.zeros((2 * d, 2 * d))
    out[:d, :d] = np.linalg.cholesky(width.inverse)
    out[d:, d:] = np.linalg.cholesky(width.matrix)
    return out


def direct_sample(spec: DensitySpec, n: int, seed: int) -> SampleBatch:
    """Draw n i.i.d. double phase-space points from a closed-form Gaussian density.

    Supports the Husimi and sqrt-Husimi products and the optimal density
    for the identity observable; anything else needs `hmc_sample`.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if spec.kind == "optimal" and spec.observable.kind != "identity":
        raise CapabilityError(
            f"no closed-form sampler for optimal({spec.observable.label()}); use hmc_sample"
        )
    d = spec.dim
    eps = spec.psi0.epsilon
    z0 = spec.psi0.center.as_vector()
    lfac = _sigma0_inv_factor(spec.psi0.width)
    rng = make_rng(seed, 0)
    xi = rng.standard_normal((n, 4 * d))
    xi_y = xi[:, : 2 * d] @ lfac.T
    xi_z = xi[:, 2 * d :] @ lfac.T
    if spec.kind == "husimi":
        y = z0 + math.sqrt(eps) * xi_y
        z = z0 + math.sqrt(eps) * xi_z
    elif spec.kind == "sqrt-husimi":
        y = z0 + math.sqrt(2.0 * eps) * xi_y
        z = z0 + math.sqrt(2.0 * eps) * xi_z
    else:
        # Cov[(y,z)] = (2 eps / 3) [[2, 1], [1, 2]] (x) Sigma0^-1
        root = math.sqrt(2.0 * eps)
        y = z0 + root * math.sqrt(2.0 / 3.0) * xi_y
        z = z0 + root * (xi_y / math.sqrt(6.0) + xi_z / math.sqrt(2.0))
    points = np.hstack([y, z])
    return SampleBatch(
        points=points,
        spec=spec,
        log_density=log_density_unnormalized(spec, points),
        seed=int(seed),
    )


# ---------------------------------------------------------------------------
# Polynomial factor and gradient in the unit-width variables
# ---------------------------------------------------------------------------

def _pol_vu(obs: Observable, v: np.ndarray, u: np.ndarray, eps: float):
    """Pol and its derivatives w.r.t. v and u for unit width matrix.

    v = (q_y + q_z) + i(p_z - p_y), u = (p_y + p_z) + i(q_y - q_z); both (n, D).
    Returns (pol (n,), dv (n, D), du (n, D)); du/dv are None when identically zero.
    """
    n, d = v.shape
    kind = obs.kind
    if kind == "identity":
        return np.ones(n, dtype=complex), None, None
    if kind == "position":
        j = obs.index - 1
        dv = np.zeros((n, d), dtype=complex)
        dv[:, j] = 0.5
        return 0.5 * v[:, j], dv, None
    if kind == "position_sq":
        j = obs.index - 1
        dv = np.zeros((n, d), dtype=complex)
        dv[:, j] = 0.5 * v[:, j]
        return (2.0 * eps + v[:, j] ** 2) / 4.0, dv, None
    if kind == "momentum":
        j = obs.index - 1
        du = np.zeros((n, d), dtype=complex)
        du[:, j] = 0.5
        return 0.5 * u[:, j], None, du
    if kind == "momentum_sq":
        j = obs.index - 1
        du = np.zeros((n, d), dtype=complex)
        du[:, j] = 0.5 * u[:, j]
        return (2.0 * eps + u[:, j] ** 2) / 4.0, None, du
    if kind == "kinetic":
        return np.sum(2.0 * eps + u**2, axis=1) / 8.0, None, u / 4.0
    if kind == "potential" and obs.potential == "harmonic":
        return np.sum(2.0 * eps + v**2, axis=1) / 8.0, v / 4.0, None
    if kind == "potential":  # henon-heiles, unit width
        sigma = obs.sigma
        quad = 2.0 * eps + v**2
        pol = np.sum(quad, axis=1) / 8.0
        dv = v / 4.0
        if d >= 2:
            vj, vj1 = v[:, :-1], v[:, 1:]
            quadj, quadj1 = quad[:, :-1], quad[:, 1:]
            pol = pol + sigma * np.sum(
                (vj / 2.0) * (quadj1 / 4.0) - (vj**3 + 6.0 * eps * vj) / 24.0, axis=1
            )
            quart = v**4 + 12.0 * eps * v**2 + 12.0 * eps**2
            pol = pol + (sigma**2 / 16.0) * np.sum(
                quadj * quadj1 / 8.0 + (quart[:, :-1] + quart[:, 1:]) / 16.0, axis=1
            )
            dquart = 4.0 * v**3 + 24.0 * eps * v
            dv = dv.copy()
            dv[:, :-1] += sigma * (quadj1 / 8.0 - (3.0 * vj**2 + 6.0 * eps) / 24.0)
            dv[:, 1:] += sigma * vj * vj1 / 4.0
            dv[:, :-1] += (sigma**2 / 16.0) * (vj * quadj1 / 4.0 + dquart[:, :-1] / 16.0)
            dv[:, 1:] += (sigma**2 / 16.0) * (quadj * vj1 / 4.0 + dquart[:, 1:] / 16.0)
        return pol, dv, None
    if kind == "total_energy":
        pot = Observable("potential", potential=obs.potential, sigma=obs.sigma)
        p1, dv1, du1 = _pol_vu(pot, v, u, eps)
        p2, dv2, du2 = _pol_vu(Observable.kinetic(), v, u, eps)
        return p1 + p2, dv1, du2
    raise CapabilityError(f"unsupported observable kind {kind!r}")


def _pol_and_gradient(obs: Observable, w: np.ndarray, eps: float):
    """Pol(w) and its complex gradient w.r.t. (q_y, p_y, q_z, p_z), unit width.

    Returns pol (n,) and grad (n, 4D) with d Pol / d w_k entries.
    """
    n, four_d = w.shape
    d = four_d // 4
    qy, py, qz, pz = w[:, :d], w[:, d : 2 * d], w[:, 2 * d : 3 * d], w[:, 3 * d :]
    v = (qy + qz) + 1j * (pz - py)
    u = (py + pz) + 1j * (qy - qz)
    pol, dv, du = _pol_vu(obs, v, u, eps)
    grad = np.zeros((n, 4 * d), dtype=complex)
    if dv is not None:
        grad[:, :d] += dv
        grad[:, d : 2 * d] += -1j * dv
        grad[:, 2 * d : 3 * d] += dv
        grad[:, 3 * d :] += 1j * dv
    if du is not None:
        grad[:, :d] += 1j * du
        grad[:, d : 2 * d] += du
        grad[:, 2 * d : 3 * d] += -1j * du
        grad[:, 3 * d :] += du
    return pol, grad


def optimal_potential(spec: DensitySpec, w: np.ndarray) -> np.ndarray:
    """U(w) = -log rho_opt(w) up to an additive constant, for unit width matrix."""
    if spec.kind != "optimal":
        raise CapabilityError("the chain potential is defined for optimal densities only")
    if not spec.psi0.width.is_identity:
        raise CapabilityError("the chain potential requires unit width matrix")
    return -log_density_unnormalized(spec, w)


def optimal_potential_gradient(spec: DensitySpec, w: np.ndarray) -> np.ndarray:
    """Gradient of U = -log rho_opt w.r.t. (q_y, p_y, q_z, p_z), shape (n, 4D).

    The quadratic part comes from the Gaussian overlaps; the polynomial
    part contributes -Re(conj(Pol) grad Pol) / |Pol|^2 (a minus sign:
    U contains -log|Pol|).  Infinite on the |Pol| = 0 manifold.
    """
    if spec.kind != "optimal":
        raise CapabilityError("the chain gradient is defined for optimal densities only")
    if not spec.psi0.width.is_identity:
        raise CapabilityError("the chain gradient requires unit width matrix")
    w = np.asarray(w, dtype=float)
    d = spec.dim
    eps = spec.psi0.epsilon
    z0 = spec.psi0.center.as_vector()
    y = w[:, : 2 * d]
    z = w[:, 2 * d :]
    grad = np.empty_like(w)
    grad[:, : 2 * d] = ((y - z0) - (z - y)) / (2.0 * eps)
    grad[:, 2 * d :] = ((z - z0) + (z - y)) / (2.0 * eps)
    pol, dpol = _pol_and_gradient(spec.observable, w, eps)
    if spec.observable.kind != "identity":
        absq = np.abs(pol) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            grad -= np.real(np.conj(pol)[:, None] * dpol) / absq[:, None]
    return grad


# ---------------------------------------------------------------------------
# Hamiltonian Monte Carlo
# ---------------------------------------------------------------------------

def hmc_sample(spec: DensitySpec, params: HmcParams, n: int, seed: int) -> SampleBatch:
    """Sample the optimal density by HMC with leapfrog proposals.

    Runs params.n_chains chains in lockstep, each with its own burn-in;
    post-burn-in states are interleaved round-by-round and truncated to n.
    Proposals that land on the |Pol| = 0 manifold, or leave the finite
    domain, are rejected and the chain continues.
    """
    if spec.kind != "optimal":
        raise CapabilityError("hmc_sample targets optimal densities; use direct_sample otherwise")
    if not spec.psi0.width.is_identity:
        raise CapabilityError("hmc_sample requires unit width matrix")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    d = spec.dim
    eps = spec.psi0.epsilon
    step = params.step_size if params.step_size is not None else 0.1 * math.sqrt(eps)
    k = params.n_chains
    mass = float(params.mass)
    rng = make_rng(seed, 1)

    z0 = spec.psi0.center.as_vector()
    pos = np.tile(np.concatenate([z0, z0]), (k, 1))
    pos += 0.5 * math.sqrt(eps) * rng.standard_normal((k, 4 * d))
    u_cur = optimal_potential(spec, pos)
    if not np.all(np.isfinite(u_cur)):
        # retry the jitter once; landing exactly on a zero manifold has measure zero
        pos[~np.isfinite(u_cur)] += 0.1 * math.sqrt(eps) * rng.standard_normal(
            (int(np.sum(~np.isfinite(u_cur))), 4 * d)
        )
        u_cur = optimal_potential(spec, pos)
        if not np.all(np.isfinite(u_cur)):
            raise SamplerError("could not initialize chains at finite potential values")

    rounds = -(-n // k)  # ceil
    collected = np.empty((rounds, k, 4 * d))
    logdens = np.empty((rounds, k))
    accepted = 0
    total = 0
    for it in range(params.burn_in + rounds):
        grad = optimal_potential_gradient(spec, pos)
        if not np.all(np.isfinite(grad)):
            raise SamplerError(f"non-finite chain gradient at iteration {it}")
        mom = math.sqrt(mass) * rng.standard_normal((k, 4 * d))
        h_cur = u_cur + 0.5 * np.sum(mom**2, axis=1) / mass

        q_new = pos.copy()
        m_new = mom - 0.5 * step * grad
        with np.errstate(all="ignore"):
            for leap in range(params.n_leapfrog):
                q_new += step * m_new / mass
                g_new = optimal_potential_gradient(spec, q_new)
                if leap < params.n_leapfrog - 1:
                    m_new -= step * g_new
            m_new -= 0.5 * step * g_new
            u_new = optimal_potential(spec, q_new)
            h_new = u_new + 0.5 * np.sum(m_new**2, axis=1) / mass
            log_alpha = h_cur - h_new
        log_alpha = np.where(np.isfinite(h_new), log_alpha, -np.inf)
        accept = np.log(rng.uniform(size=k)) < log_alpha
        pos = np.where(accept[:, None], q_new, pos)
        u_cur = np.where(accept, u_new, u_cur)
        if it >= params.burn_in:
            accepted += int(np.sum(accept))
            total += k
            collected[it - params.burn_in] = pos
            logdens[it - params.burn_in] = -u_cur

    points = collected.reshape(rounds * k, 4 * d)[:n]
    return SampleBatch(
        points=points,
        spec=spec,
        log_density=logdens.reshape(rounds * k)[:n],
        seed=int(seed),
        acceptance=accepted / total if total else None,
    )
