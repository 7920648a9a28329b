"""Nonlinearities-stopped exponential Euler approximations of a stochastic
reaction-diffusion equation, with Monte Carlo strong-error tooling."""
from .errors import ConfigurationError, InvariantViolation
from .kernels import BACKEND
from .model import (
    ModelSpec,
    TheoryConstants,
    coercivity_constant,
    lemma_constant_C,
    diffusion_apply,
    drift,
    hs_norm,
    monotonicity_constant,
    taming_threshold,
)
from .noise import BrownianPath, coarse_increment, generate, sample_seed
from .scheme import (
    SchemeParams,
    Trajectory,
    indicator,
    simulate,
    simulate_counterpart,
    simulate_untamed,
    stopped_euler_step,
    untamed_step,
)
from .spectral import (
    GridPlan,
    OperatorSpectrum,
    SpectralField,
    apply_semigroup,
    fractional_norm,
    from_grid,
    phi1_weight,
    project,
    to_grid,
)

__version__ = "0.1.0"
