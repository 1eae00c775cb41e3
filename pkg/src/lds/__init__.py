"""Large-deviation rate functions, escort Bayesian prediction and information criteria
for states given by finite central measures."""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ConfigurationError,
    DegenerateModelError,
    DomainError,
    InferenceError,
    LDSError,
    NumericalError,
    ParseError,
    SchemaError,
    StructuralError,
)
from .measures import (
    Alphabet,
    CentralState,
    DiscreteMeasure,
    Observable,
    StateMetricBasis,
    kl_divergence,
    matrix_relative_entropy,
    quantum_relative_entropy,
    relative_entropy,
    state_distance,
    to_density_matrix,
)
from .intervals import Interval, IntervalSet
from .cramer import (
    RateFunctionProfile,
    SampledDistribution,
    ScalarDistribution,
    cgf,
    cramer_bound_check,
    exact_mean_tail,
    mc_mean_tail,
    rate_function,
)
from .sanov import (
    EmpiricalMeasure,
    ExplicitMeasures,
    MomentHalfSpace,
    TVBall,
    empirical_measure,
    exact_empirical_prob,
    mc_empirical_prob,
    sanov_bound_check,
    sanov_rate,
)
from .escort import (
    EscortPosterior,
    ParametricModel,
    classical_risk,
    escort_posterior,
    escort_predictive,
    escort_predictive_state,
    partition_function,
    posterior_mean,
    quantum_risk,
    risk_minimality_check,
)
from .selection import (
    StandardFormExponents,
    TruthSpec,
    aic,
    bayes_losses,
    coherence_check,
    functional_variance,
    learning_coefficient,
    optimal_parameter,
    select_model,
    stochastic_complexity_asymptotics,
    waic,
)
from .stein import HypothesisPair, NPTest, error_probabilities, np_optimal_beta, stein_exponent_check
