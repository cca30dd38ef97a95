"""Phase-space value types: points, Gaussian wavepackets, width matrices, observables.

All quantities are dimensionless.  A single phase-space point is z = (q, p) in
R^{2D}; a double phase-space point is w = (y, z) in R^{4D}.  Vectorized code
elsewhere flattens points into arrays of length 2D (concat(q, p)) or 4D
(concat(y, z)); the helpers at the bottom convert between the two views.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SimConfig",
    "PhaseSpacePoint",
    "DoublePhasePoint",
    "WidthMatrix",
    "GaussianWavepacket",
    "Observable",
    "gaussian_eval",
    "sigma0",
]

_SYM_TOL = 1e-12


def _as_float_vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


@dataclass(frozen=True)
class SimConfig:
    """Spatial dimension D and semiclassical parameter epsilon."""

    dim: int
    epsilon: float

    def __post_init__(self):
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if not (self.epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")


@dataclass(frozen=True)
class PhaseSpacePoint:
    """Point z = (q, p) in a single phase space R^{2D}."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = _as_float_vector(self.q, "q")
        p = _as_float_vector(self.p, "p")
        if q.shape != p.shape:
            raise ValueError(f"q and p must share length, got {q.shape} vs {p.shape}")
        q.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    def as_vector(self) -> np.ndarray:
        """Flatten to concat(q, p), length 2D."""
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_vector(cls, vec) -> "PhaseSpacePoint":
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1 or vec.shape[0] % 2 != 0:
            raise ValueError(f"phase-space vector must have even length, got shape {vec.shape}")
        d = vec.shape[0] // 2
        return cls(vec[:d], vec[d:])

    def __eq__(self, other):
        if not isinstance(other, PhaseSpacePoint):
            return NotImplemented
        return np.array_equal(self.q, other.q) and np.array_equal(self.p, other.p)


@dataclass(frozen=True)
class DoublePhasePoint:
    """Point w = (y, z) on the double phase space R^{4D}."""

    y: PhaseSpacePoint
    z: PhaseSpacePoint

    def __post_init__(self):
        if self.y.dim != self.z.dim:
            raise ValueError(
                f"y and z must share dimension, got {self.y.dim} vs {self.z.dim}"
            )

    @property
    def dim(self) -> int:
        return self.y.dim

    def as_vector(self) -> np.ndarray:
        """Flatten to concat(y, z), length 4D."""
        return np.concatenate([self.y.as_vector(), self.z.as_vector()])

    @classmethod
    def from_vector(cls, vec) -> "DoublePhasePoint":
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1 or vec.shape[0] % 4 != 0:
            raise ValueError(f"double phase-space vector length must be 4D, got shape {vec.shape}")
        half = vec.shape[0] // 2
        return cls(PhaseSpacePoint.from_vector(vec[:half]), PhaseSpacePoint.from_vector(vec[half:]))


class WidthMatrix:
    """Real symmetric positive-definite Gaussian width matrix.

    Symmetry and positive-definiteness are checked at construction;
    the inverse is precomputed since every overlap formula needs it.
    """

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"width matrix must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("width matrix contains non-finite entries")
        scale = max(np.abs(m).max(), 1.0)
        if np.abs(m - m.T).max() > _SYM_TOL * scale:
            raise ValueError("width matrix is not symmetric to machine tolerance")
        m = 0.5 * (m + m.T)
        eigvals = np.linalg.eigvalsh(m)
        if eigvals[0] <= 0:
            raise ValueError(f"width matrix is not positive-definite (min eigenvalue {eigvals[0]:g})")
        m.setflags(write=False)
        self.matrix = m
        self.inverse = np.linalg.inv(m)
        self.inverse.setflags(write=False)
        self.min_eigenvalue = float(eigvals[0])
        self.is_diagonal = bool(np.count_nonzero(m - np.diag(np.diag(m))) == 0)
        self.is_identity = self.is_diagonal and np.allclose(np.diag(m), 1.0, rtol=0, atol=1e-14)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix)

    @classmethod
    def identity(cls, dim: int) -> "WidthMatrix":
        return cls(np.eye(dim))

    @classmethod
    def from_diagonal(cls, entries) -> "WidthMatrix":
        return cls(np.diag(np.asarray(entries, dtype=float)))

    def __repr__(self):
        return f"WidthMatrix(dim={self.dim}, diagonal={self.is_diagonal})"


def sigma0(width: WidthMatrix) -> np.ndarray:
    """Block-diagonal phase-space width matrix diag(Gamma, Gamma^-1), shape (2D, 2D)."""
    d = width.dim
    out = np.zeros((2 * d, 2 * d))
    out[:d, :d] = width.matrix
    out[d:, d:] = width.inverse
    return out


@dataclass(frozen=True)
class GaussianWavepacket:
    """Frozen Gaussian g_z with fixed width matrix, unit L2 norm by construction."""

    center: PhaseSpacePoint
    width: WidthMatrix
    config: SimConfig

    def __post_init__(self):
        if self.center.dim != self.config.dim or self.width.dim != self.config.dim:
            raise ValueError(
                f"inconsistent dimensions: center {self.center.dim}, "
                f"width {self.width.dim}, config {self.config.dim}"
            )

    @property
    def dim(self) -> int:
        return self.config.dim

    @property
    def epsilon(self) -> float:
        return self.config.epsilon


def gaussian_eval(g: GaussianWavepacket, x) -> complex:
    """Evaluate g_z(x) = (det Gamma / (pi eps)^D)^{1/4} exp(-(x-q)'Gamma(x-q)/2eps + i p'(x-q)/eps)."""
    x = _as_float_vector(x, "x")
    if x.shape[0] != g.dim:
        raise ValueError(f"x has length {x.shape[0]}, expected {g.dim}")
    eps = g.epsilon
    dx = x - g.center.q
    quad = dx @ g.width.matrix @ dx
    phase = g.center.p @ dx
    pref = (np.linalg.det(g.width.matrix) / (np.pi * eps) ** g.dim) ** 0.25
    return complex(pref * np.exp(-quad / (2.0 * eps) + 1j * phase / eps))


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------

_POTENTIAL_TAGS = ("harmonic", "henon-heiles")


@dataclass(frozen=True)
class Observable:
    """Descriptor for the supported self-adjoint operators.

    kind is one of 'identity', 'position', 'position_sq', 'momentum',
    'momentum_sq', 'kinetic', 'potential', 'total_energy'.  Component
    operators carry a 1-based index; potential-flavoured kinds carry the
    potential tag and, for the Henon-Heiles potential, its coupling sigma.
    """

    kind: str
    index: int | None = None
    potential: str | None = None
    sigma: float | None = None

    _COMPONENT = ("position", "position_sq", "momentum", "momentum_sq")

    def __post_init__(self):
        if self.kind in self._COMPONENT:
            if not isinstance(self.index, (int, np.integer)) or self.index < 1:
                raise ValueError(f"{self.kind} needs a 1-based component index, got {self.index!r}")
        elif self.index is not None:
            raise ValueError(f"{self.kind} takes no component index")
        if self.kind in ("potential", "total_energy"):
            if self.potential not in _POTENTIAL_TAGS:
                raise ValueError(f"{self.kind} needs a potential tag from {_POTENTIAL_TAGS}")
            if self.potential == "henon-heiles":
                if self.sigma is None or self.sigma < 0:
                    raise ValueError("henon-heiles observables need sigma >= 0")
        elif self.kind not in ("identity", "kinetic") + self._COMPONENT:
            raise ValueError(f"unknown observable kind {self.kind!r}")

    # -- factories ----------------------------------------------------------
    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def position(cls, j: int):
        return cls("position", index=j)

    @classmethod
    def position_sq(cls, j: int):
        return cls("position_sq", index=j)

    @classmethod
    def momentum(cls, j: int):
        return cls("momentum", index=j)

    @classmethod
    def momentum_sq(cls, j: int):
        return cls("momentum_sq", index=j)

    @classmethod
    def kinetic(cls):
        return cls("kinetic")

    @classmethod
    def potential_harmonic(cls):
        return cls("potential", potential="harmonic")

    @classmethod
    def potential_henon_heiles(cls, sigma: float):
        return cls("potential", potential="henon-heiles", sigma=sigma)

    @classmethod
    def total_energy(cls, potential: str, sigma: float | None = None):
        return cls("total_energy", potential=potential, sigma=sigma)

    def check_index(self, dim: int) -> None:
        if self.index is not None and self.index > dim:
            raise ValueError(f"component index {self.index} out of range for D={dim}")

    @property
    def is_zero(self) -> bool:
        return False

    def label(self) -> str:
        """Short stable name used in result tables and configs."""
        if self.kind == "identity":
            return "Id"
        if self.kind == "position":
            return f"q{self.index}"
        if self.kind == "position_sq":
            return f"q{self.index}sq"
        if self.kind == "momentum":
            return f"p{self.index}"
        if self.kind == "momentum_sq":
            return f"p{self.index}sq"
        if self.kind == "kinetic":
            return "T"
        if self.kind == "potential":
            return "V"
        return "E"
