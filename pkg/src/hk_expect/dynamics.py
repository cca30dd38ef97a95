"""Classical propagation of phase-space seeds for the frozen-Gaussian integrand.

For the separable Hamiltonian h(q, p) = |p|^2/2 + V(q), each seed carries a
trajectory z(t), the classical action S_t (time integral of the Lagrangian
|p|^2/2 - V(q)), the stability matrix M(t) = dz(t)/dz(0), and the complex
prefactor

    R_t = 2^{-D/2} det(M_qq + G^-1 M_pp G - i M_qp G + i G^-1 M_pq)^{1/2}

whose square-root branch must vary continuously in time.  The determinant's
argument is unwrapped step by step assuming it moves by less than pi per
step; a larger jump (or a vanishing determinant, i.e. a caustic) raises
BranchAmbiguityError instead of silently picking a branch.

The one-step map is Stormer-Verlet (kick-drift-kick).  The action uses the
trapezoid rule on the Lagrangian at the step endpoints, and M is advanced
with the exact Jacobian of the discrete map, so M stays symplectic to
roundoff.  Both choices are globally second order, matching the integrator.

`propagate_pair` handles a single double-phase-space seed; `iterate_saves`
is the vectorized engine used by the experiment harness (one generator per
batch of seeds, yielding a snapshot at every save point).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DoublePhasePoint, PhaseSpacePoint, WidthMatrix
from .errors import BranchAmbiguityError, CapabilityError, PropagationError

__all__ = [
    "Potential",
    "HarmonicPotential",
    "HenonHeilesPotential",
    "make_potential",
    "TimeGrid",
    "TrajectoryState",
    "verlet_step",
    "hk_prefactor",
    "propagate_pair",
    "phase_factor",
    "iterate_saves",
    "BatchSnapshot",
]

_BRANCH_GUARD = np.pi * (1.0 - 1e-9)


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------

class Potential:
    """Potential energy surface with value/gradient/hessian, batched over (..., D)."""

    tag: str
    hessian_is_identity = False  # lets the propagator skip Hess V matmuls

    def value(self, q) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, q) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, q) -> np.ndarray:
        raise NotImplementedError

    def evaluate_all(self, q):
        """(V, grad V, Hess V) in one call; subclasses share intermediates."""
        return self.value(q), self.gradient(q), self.hessian(q)

    def propagation_stage(self, q):
        """(V, grad V, apply) with apply(M) = Hess V(q) @ M for (n, D, k) stacks.

        apply is None when the Hessian is the identity.  Subclasses with
        structured Hessians override this to avoid dense matmuls.
        """
        v, g, h = self.evaluate_all(q)
        if self.hessian_is_identity:
            return v, g, None
        return v, g, (lambda m: h @ m)


class HarmonicPotential(Potential):
    """V(q) = |q|^2 / 2."""

    tag = "harmonic"
    hessian_is_identity = True

    def value(self, q):
        q = np.asarray(q, dtype=float)
        return 0.5 * np.sum(q * q, axis=-1)

    def gradient(self, q):
        return np.asarray(q, dtype=float).copy()

    def hessian(self, q):
        q = np.asarray(q, dtype=float)
        d = q.shape[-1]
        out = np.zeros(q.shape[:-1] + (d, d))
        out[...] = np.eye(d)
        return out

    def evaluate_all(self, q):
        q = np.asarray(q, dtype=float)
        return 0.5 * np.sum(q * q, axis=-1), q.copy(), None


class HenonHeilesPotential(Potential):
    """Modified Henon-Heiles chain with cubic couplings and a confining quartic term.

    V(q) = sum_j q_j^2/2
         + sum_{j<D} [ sigma (q_j q_{j+1}^2 - q_j^3/3) + sigma^2/16 (q_j^2 + q_{j+1}^2)^2 ]
    """

    tag = "henon-heiles"

    def __init__(self, sigma: float):
        if sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        self.sigma = float(sigma)

    def value(self, q):
        return self._stage_parts(q)[0]

    def gradient(self, q):
        return self._stage_parts(q)[1]

    def hessian(self, q):
        return self.evaluate_all(q)[2]

    def _stage_parts(self, q):
        """Shared work for evaluate_all / propagation_stage.

        Returns (V, grad, hess_diag, hess_off); the Hessian is tridiagonal
        with unit base diagonal, so only its bands are materialized.
        """
        q = np.asarray(q, dtype=float)
        d = q.shape[-1]
        q2 = q * q
        v = 0.5 * np.sum(q2, axis=-1)
        g = q.copy()
        diag = np.ones_like(q)
        if d < 2:
            return v, g, diag, None
        s, s2 = self.sigma, self.sigma**2
        a, b = q[..., :-1], q[..., 1:]
        a2, b2 = q2[..., :-1], q2[..., 1:]
        r = a2 + b2
        v += s * np.sum(a * b2 - a * a2 / 3.0, axis=-1)
        v += (s2 / 16.0) * np.sum(r * r, axis=-1)
        g[..., :-1] += s * (b2 - a2) + 0.25 * s2 * a * r
        g[..., 1:] += 2.0 * s * (a * b) + 0.25 * s2 * b * r
        diag[..., :-1] += -2.0 * s * a + 0.25 * s2 * (r + 2.0 * a2)
        diag[..., 1:] += 2.0 * s * a + 0.25 * s2 * (r + 2.0 * b2)
        off = 2.0 * s * b + 0.5 * s2 * (a * b)
        return v, g, diag, off

    def evaluate_all(self, q):
        v, g, diag, off = self._stage_parts(q)
        d = diag.shape[-1]
        h = np.zeros(diag.shape + (d,))
        i = np.arange(d)
        h[..., i, i] = diag
        if off is not None:
            j = np.arange(d - 1)
            h[..., j, j + 1] = off
            h[..., j + 1, j] = off
        return v, g, h


def make_potential(tag: str, sigma: float | None = None) -> Potential:
    if tag == "harmonic":
        return HarmonicPotential()
    if tag == "henon-heiles":
        if sigma is None:
            raise ValueError("henon-heiles potential needs sigma")
        return HenonHeilesPotential(sigma)
    raise CapabilityError(f"unsupported potential tag {tag!r}")


def hamiltonian(q, p, potential: Potential) -> np.ndarray:
    """h(q, p) = |p|^2/2 + V(q), batched."""
    p = np.asarray(p, dtype=float)
    return 0.5 * np.sum(p * p, axis=-1) + potential.value(q)


# ---------------------------------------------------------------------------
# Time grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeGrid:
    """Uniform integration grid; states are recorded every `save_stride` steps."""

    t_final: float
    dt: float
    save_stride: int = 1

    def __post_init__(self):
        if self.t_final < 0:
            raise ValueError(f"t_final must be >= 0, got {self.t_final}")
        if not (self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not isinstance(self.save_stride, (int, np.integer)) or self.save_stride < 1:
            raise ValueError(f"save_stride must be a positive integer, got {self.save_stride}")
        n = round(self.t_final / self.dt)
        if abs(n * self.dt - self.t_final) > 1e-8 * max(1.0, abs(self.t_final)):
            raise ValueError(
                f"t_final={self.t_final} is not an integer multiple of dt={self.dt}"
            )
        if n % self.save_stride != 0:
            raise ValueError(
                f"step count {n} is not a multiple of save_stride={self.save_stride}"
            )

    @property
    def n_steps(self) -> int:
        return round(self.t_final / self.dt)

    @property
    def n_saves(self) -> int:
        return self.n_steps // self.save_stride + 1

    @property
    def save_times(self) -> np.ndarray:
        return self.dt * self.save_stride * np.arange(self.n_saves)


# ---------------------------------------------------------------------------
# Prefactor
# ---------------------------------------------------------------------------

def _prefactor_matrix(mqq, mqp, mpq, mpp, width: WidthMatrix) -> np.ndarray:
    """M_qq + G^-1 M_pp G + i (G^-1 M_pq - M_qp G), batched over leading axes."""
    if width.is_identity:
        return (mqq + mpp) + 1j * (mpq - mqp)
    g, gi = width.matrix, width.inverse
    return (mqq + gi @ mpp @ g) + 1j * (gi @ mpq - mqp @ g)


def _unwrap_angle(principal, phase_prev):
    """Continuous determinant argument; raises if a step moves by >= pi."""
    delta = (principal - phase_prev + np.pi) % (2.0 * np.pi) - np.pi
    return phase_prev + delta, np.abs(delta)


def hk_prefactor(m: np.ndarray, width: WidthMatrix, branch_phase_prev: float) -> tuple[complex, float]:
    """Prefactor R from a 2Dx2D stability matrix, with branch continuation.

    Returns (R, accumulated determinant argument).  The complex square
    root branch follows the unwrapped argument of the determinant; the
    caller supplies the previous accumulated argument, 0.0 at t = 0.
    """
    m = np.asarray(m, dtype=float)
    d = width.dim
    if m.shape != (2 * d, 2 * d):
        raise ValueError(f"stability matrix must be {(2*d, 2*d)}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise PropagationError("stability matrix contains non-finite entries")
    a = _prefactor_matrix(m[:d, :d], m[:d, d:], m[d:, :d], m[d:, d:], width)
    sign, logabs = np.linalg.slogdet(a)
    if not np.isfinite(logabs):
        raise BranchAmbiguityError("prefactor determinant vanished or overflowed (caustic?)")
    theta, jump = _unwrap_angle(np.angle(sign), branch_phase_prev)
    if jump >= _BRANCH_GUARD:
        raise BranchAmbiguityError(
            f"determinant argument jumped by {jump:.6f} >= pi in one step; reduce the time step"
        )
    r = np.exp(0.5 * (logabs + 1j * theta) - 0.5 * d * np.log(2.0))
    return complex(r), float(theta)


# ---------------------------------------------------------------------------
# Single-seed propagation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryState:
    """Evolved bundle (z(t), S_t, M(t), R_t) for one phase-space seed."""

    z: PhaseSpacePoint
    S: float
    M: np.ndarray
    R: complex
    branch_phase: float
    t: float

    @classmethod
    def initial(cls, z: PhaseSpacePoint, width: WidthMatrix) -> "TrajectoryState":
        d = z.dim
        m = np.eye(2 * d)
        r, phase = hk_prefactor(m, width, 0.0)
        return cls(z=z, S=0.0, M=m, R=r, branch_phase=phase, t=0.0)


def verlet_step(state: TrajectoryState, dt: float, potential: Potential, width: WidthMatrix) -> TrajectoryState:
    """One Stormer-Verlet step of (z, S, M) plus branch-continued prefactor update."""
    if not (dt != 0.0 and np.isfinite(dt)):
        raise ValueError(f"invalid time step {dt}")
    d = state.z.dim
    q0, p0 = state.z.q, state.z.p
    with np.errstate(over="ignore", invalid="ignore"):
        grad0 = potential.gradient(q0)
        p_half = p0 - 0.5 * dt * grad0
        q1 = q0 + dt * p_half
        p1 = p_half - 0.5 * dt * potential.gradient(q1)
        if not (np.all(np.isfinite(q1)) and np.all(np.isfinite(p1))):
            raise PropagationError(f"trajectory blew up at t={state.t + dt:g}", t=state.t + dt)

        lag0 = 0.5 * float(p0 @ p0) - float(potential.value(q0))
        lag1 = 0.5 * float(p1 @ p1) - float(potential.value(q1))
        s1 = state.S + 0.5 * dt * (lag0 + lag1)

        h0 = potential.hessian(q0)
        h1 = potential.hessian(q1)
        mq, mp = state.M[:d, :], state.M[d:, :]
        a = mp - 0.5 * dt * (h0 @ mq)
        mq1 = mq + dt * a
        mp1 = a - 0.5 * dt * (h1 @ mq1)
        m1 = np.vstack([mq1, mp1])

    r1, phase1 = hk_prefactor(m1, width, state.branch_phase)
    return TrajectoryState(
        z=PhaseSpacePoint(q1, p1), S=s1, M=m1, R=r1, branch_phase=phase1, t=state.t + dt
    )


def propagate_pair(
    w: DoublePhasePoint, grid: TimeGrid, potential: Potential, width: WidthMatrix
) -> list[tuple[TrajectoryState, TrajectoryState]]:
    """Propagate the y and z seeds independently; one state pair per save point."""
    states = [TrajectoryState.initial(w.y, width), TrajectoryState.initial(w.z, width)]
    out = [tuple(states)]
    for step in range(1, grid.n_steps + 1):
        states = [verlet_step(s, grid.dt, potential, width) for s in states]
        if step % grid.save_stride == 0:
            out.append(tuple(states))
    return out


def phase_factor(pair: tuple[TrajectoryState, TrajectoryState], eps: float) -> complex:
    """conj(R_t(y)) R_t(z) exp(i (S_t(z) - S_t(y)) / eps)."""
    sy, sz = pair
    if sy.t != sz.t:
        raise ValueError(f"state times differ: {sy.t} vs {sz.t}")
    return complex(np.conj(sy.R) * sz.R * np.exp(1j * (sz.S - sy.S) / eps))


# ---------------------------------------------------------------------------
# Batched propagation engine
# ---------------------------------------------------------------------------

@dataclass
class BatchSnapshot:
    """State of a seed batch at one save point.  Arrays are detached copies.

    R is reported both as a complex value and in polar pieces (log|R| and
    the continuous argument), which the estimators use to assemble the
    phase factor without overflow.
    """

    k: int
    t: float
    q: np.ndarray            # (n, D)
    p: np.ndarray            # (n, D)
    S: np.ndarray            # (n,)
    log_abs_R: np.ndarray    # (n,)
    arg_R: np.ndarray        # (n,)
    alive: np.ndarray        # (n,) bool, False once a seed went non-finite

    @property
    def R(self) -> np.ndarray:
        with np.errstate(invalid="ignore", over="ignore"):
            return np.exp(self.log_abs_R + 1j * self.arg_R)


def iterate_saves(
    z0: np.ndarray,
    grid: TimeGrid,
    potential: Potential,
    width: WidthMatrix,
    *,
    policy: str = "abort",
    index_offset: int = 0,
):
    """Generator over save-point snapshots for a batch of seeds z0 with shape (n, 2D).

    policy 'abort' raises PropagationError at the first non-finite seed,
    naming the offending global sample indices (local index + index_offset);
    'drop' clears those seeds' `alive` flags and keeps going.  Branch
    ambiguity always raises: it invalidates every sample, not just one.
    """
    if policy not in ("abort", "drop"):
        raise ValueError(f"unknown blow-up policy {policy!r}")
    z0 = np.asarray(z0, dtype=float)
    d = width.dim
    if z0.ndim != 2 or z0.shape[1] != 2 * d:
        raise ValueError(f"z0 must have shape (n, {2*d}), got {z0.shape}")
    n = z0.shape[0]
    q = z0[:, :d].copy()
    p = z0[:, d:].copy()
    s = np.zeros(n)
    # stability-matrix block rows: Mq = [M_qq | M_qp], Mp = [M_pq | M_pp]
    mq = np.zeros((n, d, 2 * d))
    mp = np.zeros((n, d, 2 * d))
    mq[:, :, :d] = np.eye(d)
    mp[:, :, d:] = np.eye(d)
    theta = np.zeros(n)
    log_abs_r = np.zeros(n)
    alive = np.ones(n, dtype=bool)

    yield BatchSnapshot(0, 0.0, q.copy(), p.copy(), s.copy(), log_abs_r.copy(), 0.5 * theta.copy(), alive.copy())
    if grid.n_steps == 0:
        return

    dt = grid.dt
    half_log2_d = 0.5 * d * np.log(2.0)
    pot, grad, happly = potential.propagation_stage(q)
    unit_width = width.is_identity
    apre = np.empty((n, d, d), dtype=complex) if unit_width else None
    with np.errstate(all="ignore"):
        for step in range(1, grid.n_steps + 1):
            lag0 = 0.5 * np.sum(p * p, axis=-1) - pot
            p_half = p - 0.5 * dt * grad
            q += dt * p_half
            pot, grad, happly_new = potential.propagation_stage(q)
            p[:] = p_half - 0.5 * dt * grad
            s += 0.5 * dt * (lag0 + 0.5 * np.sum(p * p, axis=-1) - pot)

            a = mp - 0.5 * dt * (mq if happly is None else happly(mq))
            mq += dt * a
            mp[:] = a - 0.5 * dt * (mq if happly_new is None else happly_new(mq))
            happly = happly_new

            t_now = step * dt
            ok = np.isfinite(q).all(axis=1) & np.isfinite(p).all(axis=1) & np.isfinite(s)
            if unit_width:
                apre.real[:] = mq[:, :, :d]
                apre.real += mp[:, :, d:]
                apre.imag[:] = mp[:, :, :d]
                apre.imag -= mq[:, :, d:]
            else:
                apre = _prefactor_matrix(mq[:, :, :d], mq[:, :, d:], mp[:, :, :d], mp[:, :, d:], width)
            safe = apre if bool(ok.all()) else np.where(ok[:, None, None], apre, np.eye(d, dtype=complex))
            sign, logabs = np.linalg.slogdet(safe)
            ok &= np.isfinite(logabs)
            newly_dead = alive & ~ok
            if np.any(newly_dead):
                indices = (np.nonzero(newly_dead)[0] + index_offset).tolist()
                if policy == "abort":
                    raise PropagationError(
                        f"{len(indices)} seed(s) blew up at t={t_now:g}; first indices {indices[:8]}",
                        t=t_now,
                        indices=indices,
                    )
                alive &= ok
            theta_new, jump = _unwrap_angle(np.angle(sign), theta)
            if np.any(jump[alive] >= _BRANCH_GUARD):
                worst = float(np.max(jump[alive]))
                raise BranchAmbiguityError(
                    f"determinant argument jumped by {worst:.6f} >= pi at t={t_now:g}; reduce dt",
                    t=t_now,
                )
            theta = np.where(alive, theta_new, theta)
            log_abs_r = np.where(alive, 0.5 * logabs - half_log2_d, log_abs_r)

            if step % grid.save_stride == 0:
                yield BatchSnapshot(
                    step // grid.save_stride,
                    t_now,
                    q.copy(),
                    p.copy(),
                    s.copy(),
                    log_abs_r.copy(),
                    0.5 * theta.copy(),
                    alive.copy(),
                )
