"""Position-bias-aware click/conversion modeling toolkit.

Simulates position-biased search logs with known ground truth, trains the
factorized (pacc) and position-embedding (pacc-pe) multi-task CTR/CVR models
plus two baselines on them, and scores debiasing with propensity-weighted
ranking metrics and position-swap counterfactuals.
"""

from .analysis import bias_score, swap_impact_curve, swap_study
from .kernels import BACKEND as KERNEL_BACKEND
from .metrics import MetricsReport, auc, evaluate, mrr, pauc, weighted_mrr
from .models import (
    MODEL_KINDS,
    ModelConfig,
    Prediction,
    counterfactual_forward,
    make_model,
)
from .rng import RngState
from .simlog import (
    GenConfig,
    LogRecord,
    LogTable,
    PropensityTable,
    generate_logs,
    read_logs,
    split_dataset,
    write_logs,
)
from .training import TrainConfig, TrainReport, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "MODEL_KINDS",
    "GenConfig",
    "LogRecord",
    "LogTable",
    "MetricsReport",
    "ModelConfig",
    "Prediction",
    "PropensityTable",
    "RngState",
    "TrainConfig",
    "TrainReport",
    "auc",
    "bias_score",
    "counterfactual_forward",
    "evaluate",
    "generate_logs",
    "load_checkpoint",
    "make_model",
    "mrr",
    "pauc",
    "read_logs",
    "save_checkpoint",
    "split_dataset",
    "swap_impact_curve",
    "swap_study",
    "train",
    "weighted_mrr",
    "write_logs",
]
