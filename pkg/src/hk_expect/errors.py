"""Exception types shared across the package."""

__all__ = [
    "CapabilityError",
    "PropagationError",
    "BranchAmbiguityError",
    "SamplerError",
    "DegenerateWeightsError",
    "ConfigError",
]


class CapabilityError(ValueError):
    """Requested an operation outside the supported observable/width/parameter scope."""


class PropagationError(RuntimeError):
    """Trajectory propagation produced non-finite state.

    Carries the time of failure and the (global) sample indices of the
    offending seeds when known.
    """

    def __init__(self, message: str, t: float | None = None, indices=None):
        super().__init__(message)
        self.t = t
        self.indices = list(indices) if indices is not None else None


class BranchAmbiguityError(PropagationError):
    """Prefactor determinant argument jumped by >= pi in one step (reduce the step size)."""


class SamplerError(RuntimeError):
    """Markov-chain sampler hit an irrecoverable state (e.g. non-finite gradient)."""


class DegenerateWeightsError(RuntimeError):
    """All importance weights vanished; the self-normalizing estimator is undefined."""


class ConfigError(ValueError):
    """Experiment configuration failed validation; message names the offending key."""
