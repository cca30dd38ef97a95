"""Monte Carlo expectation values of quantum observables in the frozen-Gaussian approximation.

The expectation value of an observable A at time t is written as an
integral over the double phase space R^{4D} whose integrand splits into an
initial-state factor f0, a trajectory phase factor Phi_t, and a
frozen-Gaussian matrix element O_t[A].  This package samples the integral
with the Husimi, sqrt-Husimi, or observable-optimal density, using either
the crude or the self-normalizing weighted estimator, and ships the
analytical oracles needed to verify both.
"""

from .core import (
    DoublePhasePoint,
    GaussianWavepacket,
    Observable,
    PhaseSpacePoint,
    SimConfig,
    WidthMatrix,
    gaussian_eval,
    sigma0,
)
from .dynamics import (
    HarmonicPotential,
    HenonHeilesPotential,
    Potential,
    TimeGrid,
    TrajectoryState,
    hk_prefactor,
    make_potential,
    phase_factor,
    propagate_pair,
    verlet_step,
)
from .errors import (
    BranchAmbiguityError,
    CapabilityError,
    ConfigError,
    DegenerateWeightsError,
    PropagationError,
    SamplerError,
)
from .matel import MatElResult, matel, overlap, total_energy_expectation
from .sampling import (
    DensitySpec,
    HmcParams,
    SampleBatch,
    density_eval_unnormalized,
    direct_sample,
    hmc_sample,
)
from .estimators import (
    EstimatorResult,
    IntegrandFactors,
    analytic_oracle,
    compute_f0,
    crude_estimate,
    intrinsic_error,
    variance_companion_estimate,
    wis_estimate,
)
from .config import ExperimentConfig
from .harness import (
    ResultRow,
    ResultsTable,
    emit_results,
    parse_results,
    reproduce_figure,
    run_experiment,
)

__version__ = "0.1.0"
