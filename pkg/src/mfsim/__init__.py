"""Population decision simulator: mean-field loop, toy bottleneck training,
distribution metrics, and an intervention service."""

from .core import (
    ActionText,
    AgentProfile,
    AgentState,
    ContextStrategy,
    ContextText,
    Event,
    MeanFieldState,
    Provenance,
    SimulationConfig,
    StepRecord,
    Trajectory,
    validate_event,
)
from .corpus import (
    Corpus,
    SyntheticGenConfig,
    generate_synthetic,
    load_corpus,
    resample_states,
    save_corpus,
    self_exciting_config,
    split_corpus,
)
from .engine import (
    InterventionEntry,
    InterventionKind,
    InterventionSchedule,
    PopularityScore,
    apply_interventions,
    advance_states,
    build_context,
    fork_trajectory,
    ground_truth_trajectory,
    run_simulation,
    update_mean_field,
)
from .ibtune import (
    IBBatch,
    IBHyper,
    JointTable,
    grad_meanfield_loss,
    kl_bound_check,
    meanfield_loss,
    mutual_information,
    policy_nll,
    train_toy,
)
from .metrics import (
    DEFAULT_SCHEMA,
    DimensionSchema,
    LabelVector,
    MetricReport,
    classify_actions,
    dtw_distance,
    evaluate_run,
    f1_scores,
    kl_divergence,
    wasserstein1,
    window_distribution,
)

__version__ = "0.1.0"
