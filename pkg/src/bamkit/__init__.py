"""Boundary-sampling model extraction toolkit.

Clone a black-box classifier by evolving query populations toward its
decision boundaries, train a substitute on the harvested soft labels,
and measure fidelity, task accuracy, and adversarial transfer.
"""

from .adversarial import (
    AdversarialExample,
    AttackConfig,
    TransferReport,
    evaluate_transfer,
    pgd_attack,
    pgd_attack_batch,
)
from .core import (
    Bounds,
    LabeledDataset,
    Population,
    argmax_class,
    dataset_merge,
    derive_rng,
    derive_seed,
)
from .errors import (
    BamError,
    ConfigError,
    OracleError,
    ShapeError,
    TrainingError,
    UsageError,
)
from .metrics import EvalReport, accuracy, agreement, macro_auc, one_vs_rest_aucs, query_ratio
from .oracle import (
    Oracle,
    check_server,
    gaussian_mixture_oracle,
    linear_softmax_oracle,
    model_oracle,
    oracle_from_checkpoint,
    remote_oracle,
    train_victim,
)
from .sampler import (
    ExtractionResult,
    GenerationStats,
    SamplerConfig,
    feature_spans,
    fitness,
    mutate,
    next_generation,
    run_extraction,
    select_top_k,
)
from .substitute import (
    GradCheckReport,
    MlpClassifier,
    NetSpec,
    TrainConfig,
    TrainResult,
    gradient_check,
    load_checkpoint,
    save_checkpoint,
    soft_cross_entropy,
    train_substitute,
)
from .runner import (
    RunConfig,
    VictimSpec,
    build_victim,
    config_from_dict,
    load_config,
    run_ablation,
    run_full,
    run_sweep,
)

__version__ = "0.1.0"
