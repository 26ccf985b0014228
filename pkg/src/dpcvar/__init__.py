"""Differentially private CVaR estimation, learning, and rate verification."""

from dpcvar.risk import (
    BoundedLossVector,
    DiscreteDistribution,
    Envelope,
    LiftedPoint,
    LossBound,
    TailMass,
    cvar_dual_value,
    cvar_sensitivity_bound,
    empirical_cvar,
    envelope_empirical_risk,
    lifted_gradient_bound,
    lifted_loss,
    lifted_sensitivity_bound,
    lifted_subgradient,
    minimize_ru_breakpoints,
    population_cvar_discrete,
    ru_objective,
)
from dpcvar.mechanisms import (
    PrivacyBudget,
    RandomStream,
    SensitivityValue,
    exponential_mechanism,
    exponential_mechanism_probs,
    gaussian_noise,
    gaussian_sigma_for_budget,
    laplace_noise,
    stable_stream_id,
)
from dpcvar.estimators import (
    ConvexLearnerConfig,
    ConvexProblem,
    FiniteClassInstance,
    LearnerReport,
    private_convex_cvar,
    private_finite_class,
    private_scalar_cvar,
)
from dpcvar.instances import (
    DUMMY,
    EmbeddedInstance,
    EmbeddedSampler,
    LinearLowerFamily,
    PackingInstance,
    ScalarHardPair,
    build_synthetic_cvar_sample,
    embed_distribution,
    make_linear_family,
    make_packing,
    make_scalar_pair,
    packing_from_text,
    packing_to_text,
    scalar_pair_from_text,
    scalar_pair_to_text,
)

__version__ = "0.1.0"

__all__ = [
    "BoundedLossVector",
    "ConvexLearnerConfig",
    "ConvexProblem",
    "DiscreteDistribution",
    "DUMMY",
    "EmbeddedInstance",
    "EmbeddedSampler",
    "Envelope",
    "FiniteClassInstance",
    "LearnerReport",
    "LiftedPoint",
    "LinearLowerFamily",
    "LossBound",
    "PackingInstance",
    "PrivacyBudget",
    "RandomStream",
    "ScalarHardPair",
    "SensitivityValue",
    "TailMass",
    "build_synthetic_cvar_sample",
    "cvar_dual_value",
    "cvar_sensitivity_bound",
    "embed_distribution",
    "empirical_cvar",
    "envelope_empirical_risk",
    "exponential_mechanism",
    "exponential_mechanism_probs",
    "gaussian_noise",
    "gaussian_sigma_for_budget",
    "laplace_noise",
    "lifted_gradient_bound",
    "lifted_loss",
    "lifted_sensitivity_bound",
    "lifted_subgradient",
    "make_linear_family",
    "make_packing",
    "make_scalar_pair",
    "minimize_ru_breakpoints",
    "packing_from_text",
    "packing_to_text",
    "population_cvar_discrete",
    "private_convex_cvar",
    "private_finite_class",
    "private_scalar_cvar",
    "ru_objective",
    "scalar_pair_from_text",
    "scalar_pair_to_text",
    "stable_stream_id",
]
