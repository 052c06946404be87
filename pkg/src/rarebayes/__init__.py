"""Subset Simulation and BUS-style Bayesian updating.

The outer driving variable ``Y = ln L(theta) + ln(1/U)`` turns posterior
sampling into a rare-event problem. Samples above ``ln max L`` are posterior
distributed, and the level thresholds give the evidence directly.
"""

from .bus import (
    BusDriving,
    BusResult,
    EvidenceEstimate,
    PosteriorSampleSet,
    StoppingConfig,
    evaluate_driving,
    fit_tail_slope,
    inner_inadmissibility,
    posterior_expectation,
    run_bus,
    run_bus_original,
)
from .errors import (
    ConfigError,
    LevelCapError,
    ModelEvaluationError,
    PlateauError,
    RareBayesError,
    StalledLevelError,
)
from .mcmc import ProposalSpec
from .models import ConstantModel, FunctionModel, GaussianConjugate, ShearFrame, shear_default_prior
from .priors import LogNormal, Normal, PriorSpec, StandardNormal, Uniform, lognormal_from_mode_std
from .sus import SusConfig, assemble_ccdf, estimate_exceedance, run_sus

__version__ = "0.1.0"

__all__ = [
    "BusDriving",
    "BusResult",
    "EvidenceEstimate",
    "PosteriorSampleSet",
    "StoppingConfig",
    "evaluate_driving",
    "fit_tail_slope",
    "inner_inadmissibility",
    "posterior_expectation",
    "run_bus",
    "run_bus_original",
    "ConfigError",
    "LevelCapError",
    "ModelEvaluationError",
    "PlateauError",
    "RareBayesError",
    "StalledLevelError",
    "ProposalSpec",
    "ConstantModel",
    "FunctionModel",
    "GaussianConjugate",
    "ShearFrame",
    "shear_default_prior",
    "LogNormal",
    "Normal",
    "PriorSpec",
    "StandardNormal",
    "Uniform",
    "lognormal_from_mode_std",
    "SusConfig",
    "assemble_ccdf",
    "estimate_exceedance",
    "run_sus",
]
