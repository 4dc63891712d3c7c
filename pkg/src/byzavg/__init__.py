"""Byzantine averaging agreement and collaborative learning.

A library and CLI for robust distributed averaging under adversarial
message scheduling: minimal-diameter averaging and coordinate-wise trimmed
mean as per-round rules, iterated protocols with explicit contraction and
averaging constants, an attack library containing the constructions that
make the bounds tight, and learning loops that reduce collaborative
learning to averaging agreement (and back).
"""

from .aggregation import (
    AVERAGE_MINIMA,
    FIRST_LEX,
    CollectedInputs,
    MdaResult,
    MdaRule,
    OwnFilterRule,
    TrimmedMeanRule,
    mda_aggregate,
    own_filter_average,
    trimmed_mean,
)
from .adversaries import (
    CrashSubsetAdversary,
    MimicExtremeAdversary,
    NullAdversary,
    RandomNoiseAdversary,
    lower_bound_attack,
    plumbing_attacks,
    six_f_attack,
)
from .errors import ConfigurationError, DeliveryViolation, InfeasibleConfigError
from .learning import (
    ExactMeanAveraging,
    LearnConfig,
    LinearRegressionModel,
    ProtocolAveraging,
    QuadraticModel,
    avg_via_learn,
    batch_schedule,
    hom_learn_run,
    learn_run,
    stochastic_gradient,
)
from .netsim import (
    MDA_QUORUM,
    RB_WITNESS,
    AdversaryPolicy,
    RoundDelivery,
    SimConfig,
    run_round,
    substream,
    validate_delivery,
)
from .protocols import (
    MDA,
    RBTM,
    ProtocolConfig,
    check_avg_bounds,
    derive_mda_config,
    derive_rbtm_config,
    mda_rounds,
    rbtm_rounds,
    run_avg,
)
from .vectors import (
    VectorFamily,
    diameter_cw,
    diameter_cw_norm,
    diameter_l2,
    family_mean,
)

__version__ = "0.1.0"
