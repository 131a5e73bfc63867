"""cotrain: exact moment dynamics and Monte Carlo simulation of K models
repeatedly retrained on mixtures of private, shared-public, and cross-model
synthetic data (linear-regression setting)."""

__version__ = "0.1.0"

from .dynamics import (
    AsymptoticMoments,
    ConvergenceCertificate,
    MomentState,
    UnconditionalMoments,
    asymptotic_moments,
    certify_convergence,
    closed_form_states,
    operator_chain,
    run_conditional,
    solve_feedback_covariance,
    step_moments,
    unconditional_moments,
    unconditional_moments_general,
)
from .errors import (
    ConditioningError,
    CotrainError,
    DivergenceError,
    InvalidInputError,
    PreconditionError,
    ShapeError,
)
from .matcore import SpectralReport, block_diag, kron, pinv, spectral_radius, unvec, vecm
from .metrics import (
    MetricRecord,
    dispersion,
    entity_mse,
    entity_mspe,
    pooled_mvue_mse,
    relative_efficiency,
)
from .montecarlo import EmpiricalMoments, Replication, estimate_moments, simulate_once
from .scenarios import (
    ExperimentPreset,
    MaterializedScenario,
    ScenarioConfig,
    config_from_dict,
    generate_features,
    get_preset,
    load_config,
    materialize,
)
from .workflow import (
    Dataset,
    GramSet,
    GroundTruth,
    InitialData,
    LiftedOperators,
    MixWeights,
    build_gram,
    build_operators,
    build_projection,
    generate_synthetic,
    weighted_min_norm_fit,
)

__all__ = [
    "AsymptoticMoments",
    "ConditioningError",
    "ConvergenceCertificate",
    "CotrainError",
    "Dataset",
    "DivergenceError",
    "EmpiricalMoments",
    "ExperimentPreset",
    "GramSet",
    "GroundTruth",
    "InitialData",
    "InvalidInputError",
    "LiftedOperators",
    "MaterializedScenario",
    "MetricRecord",
    "MixWeights",
    "MomentState",
    "PreconditionError",
    "Replication",
    "ScenarioConfig",
    "ShapeError",
    "SpectralReport",
    "UnconditionalMoments",
    "asymptotic_moments",
    "block_diag",
    "build_gram",
    "build_operators",
    "build_projection",
    "certify_convergence",
    "closed_form_states",
    "config_from_dict",
    "dispersion",
    "entity_mse",
    "entity_mspe",
    "estimate_moments",
    "generate_features",
    "generate_synthetic",
    "get_preset",
    "kron",
    "load_config",
    "materialize",
    "operator_chain",
    "pinv",
    "pooled_mvue_mse",
    "relative_efficiency",
    "run_conditional",
    "simulate_once",
    "solve_feedback_covariance",
    "spectral_radius",
    "step_moments",
    "unconditional_moments",
    "unconditional_moments_general",
    "unvec",
    "vecm",
    "weighted_min_norm_fit",
]
