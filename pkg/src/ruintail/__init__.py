"""ruintail: moment-index calculus and seeded Monte Carlo for ruin
probabilities of discounted loss processes."""

from .dists import (
    Affine,
    ArchCoupling,
    Atoms,
    Branch,
    BranchMixture,
    Dist,
    IndepProduct,
    JointRiskSpec,
    Lognormal,
    Max,
    Min,
    MinWithParetoIndep,
    Mixture,
    Neg,
    Normal,
    Pareto,
    PointMass,
    PosPower,
    ScaledSquare,
    SeedStream,
    SumIndep,
    analytic_fractional_moment,
    a_marginal,
    b_marginal,
    sample_joint,
    sample_marginal,
    spec_digest,
    validate,
)
from .errors import (
    ConfigError,
    EmptyEventError,
    InfeasibleConstructionError,
    InsufficientPointsError,
    InvalidSpecError,
    MomentUnavailableError,
    Refusal,
    RuinTailError,
)
from .extreal import INF, ExtReal
from .index import (
    EstimatorConfig,
    IndexValue,
    analytic_index,
    check_law,
    conditional_index,
    empirical_index,
    h_function,
    lundberg_index,
)
from .esssup import (
    BoundednessVerdict,
    EsssupReport,
    boundedness_check,
    esssup_sequence,
    esssup_step,
)
from .process import (
    PathConfig,
    RuinEstimate,
    capital_path,
    estimate_ruin,
    perpetuity_sample,
    random_walk_sup,
    ruin_time,
    simulate_y_path,
)
from .constructions import (
    CouplingReport,
    MinorantSpec,
    coupled_ruin_monotonicity,
    minorant_a,
    minorant_b,
)
from .asymptotics import (
    ExponentPrediction,
    FiniteHorizonReport,
    RuinExperimentResult,
    SlopeFit,
    finite_horizon_band,
    finite_horizon_check,
    lundberg_equivalence_check,
    predicted_ultimate_exponent,
    slope_fit,
    verify_ultimate,
)

__version__ = "0.1.0"
