"""Monte Carlo estimators of <A>_t and their variance diagnostics.

The integrand on the double phase space splits into three per-sample
factors: f0 (initial state only), Phi_t (trajectory phases/prefactors) and
O_t[A] (frozen-Gaussian matrix element at the evolved centers).  The crude
estimator averages f0*Phi*O / rho with the true normalized sampling
density rho; the weighted importance sampling (WIS) estimator is the
self-normalizing ratio sum(g W)/sum(W) with g = f0*Phi*O / rho1 and
W = rho1/rho2, usable when rho2 is known only up to a constant.

Sample sums use numpy's pairwise reduction over arrays held in sample-index
order, so results are deterministic for a fixed batch regardless of how the
factors were produced.  All closed-form normalization constants for a
Gaussian initial state live here: kappa_sqrt-Husimi = 2^D and, for the
identity observable, kappa_opt = (4/3)^D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GaussianWavepacket, Observable, PhaseSpacePoint
from .errors import CapabilityError, DegenerateWeightsError, PropagationError
from .matel import overlap_batch
from .sampling import DensitySpec

__all__ = [
    "IntegrandFactors",
    "EstimatorResult",
    "compute_f0",
    "f0_batch",
    "kappa_sqrt_husimi",
    "kappa_optimal_identity",
    "log_density_normalizer",
    "crude_estimate",
    "wis_estimate",
    "intrinsic_error",
    "variance_companion_estimate",
    "analytic_oracle",
]


@dataclass(frozen=True)
class IntegrandFactors:
    """Per-sample integrand factors at one time point for one observable."""

    f0: np.ndarray    # (n,) complex, time- and observable-independent
    phi: np.ndarray   # (n,) complex, equals 1 at t = 0
    o: np.ndarray     # (n,) complex, matrix element at evolved centers

    def __post_init__(self):
        if not (self.f0.shape == self.phi.shape == self.o.shape):
            raise ValueError("factor arrays must share shape")

    @property
    def n(self) -> int:
        return self.f0.shape[0]


@dataclass(frozen=True)
class EstimatorResult:
    """Complex estimate with its per-sample variance diagnostic.

    For the crude estimator, `variance` is the unbiased empirical variance
    of the summand, so Var[estimate] ~ variance / n.  For WIS it is the
    delta-method value Var[W(g - A)] / E[W]^2 with the same normalization.
    """

    estimate: complex
    variance: float
    n: int
    kind: str
    t: float | None = None
    observable: str | None = None

    @property
    def std_err(self) -> float:
        return math.sqrt(max(self.variance, 0.0) / self.n)


def compute_f0(w, psi0: GaussianWavepacket) -> complex:
    """f0(y, z) = (2 pi eps)^{-2D} <psi0, g_y> <g_z, psi0> for one double point."""
    return complex(f0_batch(np.atleast_2d(np.asarray(w.as_vector() if hasattr(w, "as_vector") else w, dtype=float)), psi0)[0])


def f0_batch(w: np.ndarray, psi0: GaussianWavepacket) -> np.ndarray:
    """f0 over points of shape (n, 4D)."""
    d = psi0.dim
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[1] != 4 * d:
        raise ValueError(f"points must have shape (n, {4*d}), got {w.shape}")
    eps = psi0.epsilon
    q0, p0 = psi0.center.q, psi0.center.p
    qy, py = w[:, :d], w[:, d : 2 * d]
    qz, pz = w[:, 2 * d : 3 * d], w[:, 3 * d :]
    ov_y = overlap_batch(q0, p0, qy, py, psi0.width, eps)      # <psi0, g_y>
    ov_z = overlap_batch(qz, pz, q0, p0, psi0.width, eps)      # <g_z, psi0>
    return (2.0 * np.pi * eps) ** (-2 * d) * ov_y * ov_z


# ---------------------------------------------------------------------------
# Closed-form normalization constants (Gaussian initial state)
# ---------------------------------------------------------------------------

def kappa_sqrt_husimi(dim: int) -> float:
    """Normalizer of the sqrt-Husimi density: (2 pi eps)^-D int |<psi0, g_z>| dz = 2^D."""
    return 2.0**dim

def kappa_optimal_identity(dim: int) -> float:
    """Normalizer of the optimal density for A = Id: (4/3)^D."""
    return (4.0 / 3.0) ** dim


def log_density_normalizer(spec: DensitySpec) -> float:
    """log C such that C * exp(log_density_unnormalized) is the true density.

    Available exactly for the closed-form Gaussian cases; the optimal
    density of a non-identity observable has no known normalizer.
    """
    d = spec.dim
    eps = spec.psi0.epsilon
    if spec.kind == "husimi":
        return -2 * d * math.log(2.0 * math.pi * eps)
    if spec.kind == "sqrt-husimi":
        return -2 * d * math.log(4.0 * math.pi * eps)
    if spec.observable.kind == "identity":
        return -2 * d * math.log(4.0 * math.pi * eps) + d * math.log(3.0)
    raise CapabilityError(
        f"normalization of optimal({spec.observable.label()}) is not known in closed form"
    )


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

def _apply_mask(arrays, alive):
    if alive is None:
        return arrays
    return [a[alive] for a in arrays]


def crude_estimate(
    factors: IntegrandFactors,
    log_density: np.ndarray,
    *,
    density_label: str,
    alive: np.ndarray | None = None,
    t: float | None = None,
    observable: str | None = None,
) -> EstimatorResult:
    """Crude Monte Carlo estimate (1/N) sum f0 Phi O / rho.

    log_density must be the log of the *normalized* sampling density at
    the sample points.  Samples where `alive` is False (flagged
    trajectories under the drop policy) are excluded and the mean is
    renormalized over the kept count.
    """
    summand = factors.f0 * factors.phi * factors.o * np.exp(-log_density)
    (summand,) = _apply_mask([summand], alive)
    n = summand.shape[0]
    if n == 0:
        raise ValueError("crude_estimate needs at least one (kept) sample")
    if not np.all(np.isfinite(summand)):
        bad = np.nonzero(~np.isfinite(summand))[0]
        raise PropagationError(
            f"{bad.size} non-finite summand(s) reached the estimator", indices=bad.tolist()
        )
    s1 = np.sum(summand)
    estimate = s1 / n
    if n >= 2:
        var = float(np.real(np.sum(np.abs(summand - estimate) ** 2)) / (n - 1))
    else:
        var = 0.0
    return EstimatorResult(
        estimate=complex(estimate),
        variance=var,
        n=n,
        kind=f"crude[{density_label}]",
        t=t,
        observable=observable,
    )


def wis_estimate(
    factors: IntegrandFactors,
    log_rho1: np.ndarray,
    log_rho2: np.ndarray,
    *,
    rho1_label: str,
    rho2_label: str,
    alive: np.ndarray | None = None,
    t: float | None = None,
    observable: str | None = None,
) -> EstimatorResult:
    """Self-normalizing estimator sum(g W) / sum(W) with W = rho1/rho2.

    rho1 must be a normalized density (its log given exactly); rho2 may be
    known only up to a constant, which cancels in the ratio.  With
    rho1 = rho2 pointwise this reproduces crude_estimate bit for bit.
    The variance field carries the delta-method estimate
    Var[W(g - A)] / E[W]^2; note that for some weight choices (e.g.
    sqrt-Husimi over optimal) the second moment of W need not exist, in
    which case this diagnostic underestimates the true spread.
    """
    g = factors.f0 * factors.phi * factors.o * np.exp(-log_rho1)
    logw = np.asarray(log_rho1, dtype=float) - np.asarray(log_rho2, dtype=float)
    g, logw = _apply_mask([g, logw], alive)
    n = g.shape[0]
    if n == 0:
        raise ValueError("wis_estimate needs at least one (kept) sample")
    if not np.all(np.isfinite(g)):
        bad = np.nonzero(~np.isfinite(g))[0]
        raise PropagationError(
            f"{bad.size} non-finite numerator value(s) reached the estimator",
            indices=bad.tolist(),
        )
    # rescale weights for overflow safety; the ratio is scale-invariant
    w = np.exp(logw - np.max(logw[np.isfinite(logw)], initial=0.0))
    if not np.all(np.isfinite(w)):
        raise PropagationError("non-finite importance weights reached the estimator")
    sw = np.sum(w)
    if sw == 0.0:
        raise DegenerateWeightsError("all importance weights vanished")
    estimate = np.sum(g * w) / sw
    wbar = sw / n
    var = float(np.sum(np.abs(w * (g - estimate)) ** 2) / n) / wbar**2
    return EstimatorResult(
        estimate=complex(estimate),
        variance=var,
        n=n,
        kind=f"wis[{rho1_label}/{rho2_label}]",
        t=t,
        observable=observable,
    )


def intrinsic_error(result_n: EstimatorResult, result_2n: EstimatorResult) -> float:
    """|A_N - A_2N| for two independent estimates of the same quantity."""
    if result_n.kind != result_2n.kind:
        raise ValueError(f"estimator kinds differ: {result_n.kind} vs {result_2n.kind}")
    if result_n.observable != result_2n.observable or result_n.t != result_2n.t:
        raise ValueError("intrinsic error needs matching observable and time")
    return abs(result_n.estimate - result_2n.estimate)


def variance_companion_estimate(
    spec: DensitySpec,
    *,
    abs_phi: np.ndarray,
    abs_o_t: np.ndarray,
    estimate: complex,
    abs_o0: np.ndarray | None = None,
    abs_f0: np.ndarray | None = None,
    log_rho_h: np.ndarray | None = None,
    alive: np.ndarray | None = None,
) -> float:
    """Monte Carlo estimate of the integrand variance V_t[A, psi0, rho].

    Evaluated on the same samples and trajectories as the main estimate
    ("without any additional work").  Supported sampling densities:

    - sqrt-Husimi double:  kappa^4 mean(|Phi O_t|^2) - |A_t|^2,
    - optimal, identity observable:  kappa_opt^2 mean(|Phi|^2 |O_t/O_0|^2) - |A_t|^2,
    - optimal, other observables (kappa unknown): the self-normalized form
      mean(|Phi O_t / O_0|^2) / mean(W)^2 - |A_t|^2 with W = rho_H / |f0 O_0|,
      which needs |f0| and the normalized Husimi log density.
    """
    d = spec.dim
    if spec.kind == "sqrt-husimi":
        term = np.abs(abs_phi) ** 2 * np.abs(abs_o_t) ** 2
        (term,) = _apply_mask([term], alive)
        kappa = kappa_sqrt_husimi(d)
        return float(kappa**4 * np.mean(term) - abs(estimate) ** 2)
    if spec.kind == "optimal":
        if abs_o0 is None:
            raise ValueError("optimal-density companion variance needs |O_0| values")
        with np.errstate(divide="ignore", invalid="ignore"):
            core = np.abs(abs_phi) ** 2 * (np.abs(abs_o_t) / np.abs(abs_o0)) ** 2
        if spec.observable.kind == "identity":
            (core,) = _apply_mask([core], alive)
            kappa = kappa_optimal_identity(d)
            return float(kappa**2 * np.mean(core) - abs(estimate) ** 2)
        if abs_f0 is None or log_rho_h is None:
            raise ValueError(
                "companion variance for optimal(non-Id) needs |f0| and the Husimi log density"
            )
        with np.errstate(divide="ignore"):
            logw = np.asarray(log_rho_h, float) - np.log(np.abs(abs_f0)) - np.log(np.abs(abs_o0))
        w = np.exp(logw)
        core, w = _apply_mask([core, w], alive)
        wbar = np.mean(w)
        if wbar == 0.0:
            raise DegenerateWeightsError("all companion-variance weights vanished")
        return float(np.mean(core) / wbar**2 - abs(estimate) ** 2)
    raise CapabilityError(f"no companion variance estimator for {spec.kind!r} sampling")


# ---------------------------------------------------------------------------
# Analytical oracles (unit width matrix)
# ---------------------------------------------------------------------------

def _uniform_component(vec: np.ndarray, name: str) -> float:
    c = float(vec[0]) if vec.size else 0.0
    if not np.allclose(vec, c, rtol=0.0, atol=1e-12):
        raise CapabilityError(f"this oracle requires {name} = c*(1,...,1)")
    return c


def analytic_oracle(
    observable: Observable,
    t: float,
    dim: int,
    eps: float,
    z0: PhaseSpacePoint,
    kind: str,
) -> float:
    """Closed-form reference values for verification (unit width matrix).

    kind = 'harmonic-expectation': exact <A>_t for V = |x|^2/2 (any t).
    kind = 'variance-sqrt-husimi': V_t of the crude sqrt-Husimi integrand;
    time dependence available for the harmonic oscillator (for the energy
    observables z0 must have equal components per dimension).
    kind = 'variance-optimal': V_0 for the identity observable, (16/9)^D - 1.
    """
    observable.check_index(dim)
    if z0.dim != dim:
        raise ValueError(f"z0 has dimension {z0.dim}, expected {dim}")
    obk = observable.kind

    if kind == "variance-optimal":
        if obk != "identity" or t != 0.0:
            raise CapabilityError("optimal-density variance is known only for Id at t = 0")
        return (16.0 / 9.0) ** dim - 1.0

    # harmonic flow of the center (exact for V = |x|^2/2; at t = 0 it is the identity)
    ct, st = math.cos(t), math.sin(t)
    qt = z0.q * ct + z0.p * st
    pt = z0.p * ct - z0.q * st

    if kind == "harmonic-expectation":
        if obk == "identity":
            return 1.0
        if obk == "position":
            return float(qt[observable.index - 1])
        if obk == "momentum":
            return float(pt[observable.index - 1])
        if obk == "position_sq":
            return float(qt[observable.index - 1] ** 2 + 0.5 * eps)
        if obk == "momentum_sq":
            return float(pt[observable.index - 1] ** 2 + 0.5 * eps)
        if obk == "potential" and observable.potential == "harmonic":
            return float(0.5 * np.sum(qt**2) + 0.25 * dim * eps)
        if obk == "kinetic":
            return float(0.5 * np.sum(pt**2) + 0.25 * dim * eps)
        if obk == "total_energy" and observable.potential == "harmonic":
            return float(0.5 * np.sum(z0.q**2 + z0.p**2) + 0.5 * dim * eps)
        raise CapabilityError(f"no harmonic expectation oracle for {observable.label()}")

    if kind != "variance-sqrt-husimi":
        raise CapabilityError(f"unknown oracle kind {kind!r}")

    base = (16.0 / 5.0) ** dim
    if obk == "identity":
        return base - 1.0
    if obk == "position":
        c = float(qt[observable.index - 1])
        return 0.25 * base * (4.0 * c**2 + 24.0 / 5.0 * eps) - c**2
    if obk == "momentum":
        c = float(pt[observable.index - 1])
        return 0.25 * base * (4.0 * c**2 + 24.0 / 5.0 * eps) - c**2
    if obk in ("potential", "kinetic", "total_energy"):
        if obk != "kinetic" and observable.potential != "harmonic":
            raise CapabilityError("variance oracles exist for the harmonic potential only")
        c1 = _uniform_component(qt, "q0(t)")
        c2 = _uniform_component(pt, "p0(t)")
        if obk == "potential":
            c = c1
        elif obk == "kinetic":
            c = c2
        else:
            return float(
                0.25 * base * (
                    dim**2 * ((c1**2 + c2**2) + 13.0 / 5.0 * eps) ** 2
                    + dim * 24.0 / 5.0 * (6.0 / 5.0 * eps + c1**2 + c2**2)
                )
                - dim**2 * (eps + c1**2 + c2**2) ** 2
            )
        return float(
            (base / 16.0) * (
                dim**2 * (2.0 * c**2 + 13.0 / 5.0 * eps) ** 2
                + dim * (96.0 / 25.0) * (3.0 * eps + 5.0 * c**2)
            )
            - 0.25 * dim**2 * (eps + 2.0 * c**2) ** 2
        )
    raise CapabilityError(f"no sqrt-Husimi variance oracle for {observable.label()}")
