"""Stage-scheduled knowledge distillation on a condensed, value-ranked
knowledge set: online per-sample value estimation, adaptive knowledge
summarization, and cost accounting around a plain teacher-student trainer."""

from .data import Dataset, gen_gaussian_mixture, load_csv
from .emdriver import (
    CostReport,
    DistillConfig,
    DistillationError,
    RunRecord,
    ScheduleConfig,
    computation_ratio,
    init_student,
    relative_cost,
    run,
    run_baseline,
    run_with_fixed_labels,
    tau_schedule,
)
from .evaluation import accuracy, hamming_distance, ratio_sweep, reuse_run
from .knowledge import (
    CondensedSet,
    KnowledgePoint,
    KnowledgeStore,
    LabelStreamError,
    ValueLabeling,
    ValueRecord,
    build_store,
    export_labels,
    import_labels,
    load_labels,
    save_labels,
)
from .nn import MlpModel, TrainConfig, init_mlp, kd_loss, softmax, train_teacher
from .ogve import (
    OgveConfig,
    binarize,
    cost_aware_score,
    prediction_entropy,
    rank,
    rank_probability,
    record_value,
)
from .vaks import Partition, augment, epsilon_schedule, partition, summarize

__version__ = "0.1.0"
