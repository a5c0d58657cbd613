from .ablate import AblationRun, AblationTable, ablate, read_ablation_csv
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .metrics import (
    MetricsReport,
    confusion_matrix,
    read_metrics_csv,
    recalls_from_confusion,
    uar_from_confusion,
    write_metrics_csv,
)
from .train import (
    MissingParameterError,
    NonFiniteLossError,
    TrainConfig,
    TrainResult,
    evaluate,
    load_train_config,
    train,
)
