"""Seedable simulator for personalized federated co-training.

Heterogeneous clients keep private models and share knowledge only as
labeled samples produced by per-client conditional generators; a center
pools and redistributes them. Includes local-only and parameter-averaging
baselines, a calculator and Monte-Carlo validator for the co-training
error bound, and a config-driven CLI.
"""

from .baselines import BaselineConfig, fedavg_aggregate, run_fedavg, run_local_only
from .config import ExperimentConfig, load_config, parse_config
from .datagen import (
    LabeledDataset,
    MixtureTaskSpec,
    PartitionPlan,
    client_test_view,
    make_mixture_task,
    partition_iid,
    partition_noniid,
)
from .errors import (
    ConfigError,
    ContractError,
    DispatchInfeasibleError,
    NumericDivergenceError,
    PartitionInfeasibleError,
    SimulationError,
    UndefinedBaselineError,
)
from .federation import (
    CenterPool,
    ClientState,
    FedConfig,
    RunResult,
    center_aggregate,
    center_dispatch,
    client_gan_phase,
    client_local_init,
    client_update,
    run_rounds,
)
from .gan import (
    DpOpts,
    GanOpts,
    GeneratedBatch,
    GeneratorSpec,
    build_discriminator,
    dp_clip_noise,
    generate_labeled,
    generator_spec_for,
    init_generator,
    train_cgan,
)
from .metrics import MetricsLog, RoundMetrics, emit_logs, mean_rta, relative_test_accuracy
from .nn import (
    ArchSpace,
    ModelSpec,
    Params,
    TrainOpts,
    evaluate_accuracy,
    finite_diff_grad,
    forward_logits,
    init_params,
    sample_architecture,
    train_classifier,
)
from .seeds import derive_seed
from .theory import (
    BoundInputs,
    BoundReport,
    McSpec,
    bound_conditions,
    compute_bound,
    empirical_disagreement,
    mc_validate,
    poisson_tail_estimate,
)

__version__ = "0.1.0"
