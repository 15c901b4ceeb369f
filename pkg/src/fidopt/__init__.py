"""fidopt: multi-fidelity black-box hyperparameter optimization.

Optimize on cheap low-fidelity evaluations first, shrink the search space
around what worked, then continue on higher fidelities with warm-started
optimizers — plus variance-decomposition importance analysis over the trials.
"""

from .campaign import (
    CampaignResult,
    CampaignRunner,
    CampaignSpec,
    FidelityStage,
    lift_config,
    resume_campaign,
    run_campaign,
)
from .evaluators import (
    CnnMimicEvaluator,
    ExternalEvaluator,
    QuadraticEvaluator,
    TrialRequest,
    TrialResult,
    build_quadratic_space,
)
from .fanova import (
    ImportanceReport,
    exhaustive_decomposition,
    importance_table,
    marginal,
    variance_contributions,
)
from .forest import ForestParams, RegressionForest, fit_forest
from .optimizers import (
    GAOptimizer,
    Optimizer,
    RandomSearch,
    SMBOOptimizer,
    TPEOptimizer,
    expected_improvement,
    ga_step,
    make_optimizer,
    tpe_split,
)
from .space import (
    Condition,
    Configuration,
    InsufficientElitesError,
    ParamSpec,
    SearchSpace,
    SpaceError,
    When,
    build_cnn_space,
    decode,
    encode,
    is_valid,
    max_conv_layers,
    refine,
    sample,
    validate,
)
from .trial_log import Checkpoint, TrialLog, TrialRecord, read_records
from .reporting import best_so_far, summarize, time_reduction

__version__ = "0.1.0"
