"""Joint CTR/CVR optimization.

The objective is the plain sum of three parts, each averaged over the batch:

    total = bce(p_ctr, click) + bce(p_cvr, conversion) + w * restriction

The conversion loss runs over all impressions (entire-space: p_cvr is an
impression-level probability), not only over clicked ones. The restriction
term enforces an ordering between the two predicted probabilities; see
``restriction_loss`` for the modes. Averaging the restriction sum over the
batch keeps its weight batch-size invariant.

Checkpoints are .npz containers holding a JSON metadata record (format
version, model kind, dimension hyperparameters) plus every parameter array
in the model's documented ``params()`` order; loading validates all of it
and reproduces predictions bit-identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
import numpy as np

from .errors import CheckpointError, ConfigError, TrainingError
from .metrics import auc
from .nn import AdamOptimizer, SgdOptimizer, bce_grad, bce_loss
from .models import ModelConfig, Prediction, make_model, _ModelBase
from .rng import RngState
from .simlog import LogTable

__all__ = [
    "RESTRICTION_MODES",
    "TrainConfig",
    "EpochStats",
    "TrainReport",
    "restriction_loss",
    "total_loss",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

# cvr-le-ctr penalizes predicted conversion exceeding predicted click (the
# ordering implied by conversion requiring a click); ctr-le-cvr penalizes the
# opposite excess, kept for comparison experiments.
RESTRICTION_MODES = ("cvr-le-ctr", "ctr-le-cvr", "off")

_CHECKPOINT_FORMAT = "pacckit-checkpoint"
_CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 15
    batch_size: int = 256
    learning_rate: float = 1e-3
    dropout_rate: float | None = None  # overrides ModelConfig.dropout when set
    restriction: str = "cvr-le-ctr"
    restriction_weight: float = 1.0
    patience: int = 5
    seed: int = 0
    optimizer: str = "adam"
    keep: str = "best"  # "best": restore best-validation snapshot; "last": keep final

    def __post_init__(self):
        problems = []
        if self.epochs < 0:
            problems.append(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0.0:
            problems.append(f"learning_rate must be positive, got {self.learning_rate}")
        if self.dropout_rate is not None and not 0.0 <= self.dropout_rate < 1.0:
            problems.append(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.restriction not in RESTRICTION_MODES:
            problems.append(
                f"restriction must be one of {RESTRICTION_MODES}, got {self.restriction!r}"
            )
        if self.restriction_weight < 0.0:
            problems.append(f"restriction_weight must be >= 0, got {self.restriction_weight}")
        if self.patience < 0:
            problems.append(f"patience must be >= 0, got {self.patience}")
        if self.optimizer not in ("adam", "sgd"):
            problems.append(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.keep not in ("best", "last"):
            problems.append(f"keep must be 'best' or 'last', got {self.keep!r}")
        if problems:
            raise ConfigError(problems)


@dataclass
class EpochStats:
    epoch: int
    loss_total: float
    loss_ctr: float
    loss_cvr: float
    loss_res: float
    val_auc_ctr: float
    val_auc_cvr: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    checkpoint_path: str | None = None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("epoch,loss_total,loss_ctr,loss_cvr,loss_res,val_auc_ctr,val_auc_cvr\n")
            for e in self.epochs:
                fh.write(
                    f"{e.epoch},{e.loss_total!r},{e.loss_ctr!r},{e.loss_cvr!r},"
                    f"{e.loss_res!r},{e.val_auc_ctr!r},{e.val_auc_cvr!r}\n"
                )


def restriction_loss(p_ctr, p_cvr, mode: str = "cvr-le-ctr") -> float:
    """Mean hinge on the forbidden ordering between the two probabilities.

    cvr-le-ctr: mean(max(p_cvr - p_ctr, 0)) -- an item must be clicked
    before it can be purchased, so predicted conversion above predicted
    click is penalized. ctr-le-cvr flips the sign. off returns 0.
    """
    if mode not in RESTRICTION_MODES:
        raise ConfigError(f"restriction mode must be one of {RESTRICTION_MODES}, got {mode!r}")
    if mode == "off":
        return 0.0
    a = np.asarray(p_ctr, dtype=np.float64)
    b = np.asarray(p_cvr, dtype=np.float64)
    diff = b - a if mode == "cvr-le-ctr" else a - b
    return float(np.mean(np.maximum(diff, 0.0)))


def _restriction_grads(p_ctr, p_cvr, mode: str, weight: float) -> tuple[np.ndarray, np.ndarray]:
    n = len(p_ctr)
    g_ctr = np.zeros(n)
    g_cvr = np.zeros(n)
    if mode == "off" or weight == 0.0:
        return g_ctr, g_cvr
    if mode == "cvr-le-ctr":
        viol = p_cvr > p_ctr
        g_cvr[viol] = weight / n
        g_ctr[viol] = -weight / n
    else:
        viol = p_ctr > p_cvr
        g_ctr[viol] = weight / n
        g_cvr[viol] = -weight / n
    return g_ctr, g_cvr


def total_loss(pred: Prediction, click, conversion, mode: str = "cvr-le-ctr",
               weight: float = 1.0) -> tuple[float, dict]:
    """Composite loss and its components; total is exactly their float sum."""
    y_ctr = np.asarray(click, dtype=np.float64)
    y_cvr = np.asarray(conversion, dtype=np.float64)
    loss_ctr = bce_loss(pred.p_ctr, y_ctr)
    loss_cvr = bce_loss(pred.p_cvr, y_cvr)
    loss_res = weight * restriction_loss(pred.p_ctr, pred.p_cvr, mode)
    parts = {"ctr": loss_ctr, "cvr": loss_cvr, "res": loss_res}
    return loss_ctr + loss_cvr + loss_res, parts


def loss_grads(pred: Prediction, click, conversion, mode: str = "cvr-le-ctr",
               weight: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """d(total)/d(p_ctr), d(total)/d(p_cvr) for the batch."""
    y_ctr = np.asarray(click, dtype=np.float64)
    y_cvr = np.asarray(conversion, dtype=np.float64)
    g_ctr = bce_grad(pred.p_ctr, y_ctr)
    g_cvr = bce_grad(pred.p_cvr, y_cvr)
    r_ctr, r_cvr = _restriction_grads(pred.p_ctr, pred.p_cvr, mode, weight)
    return g_ctr + r_ctr, g_cvr + r_cvr


def _safe_auc(scores, labels) -> float:
    """AUC, or 0.5 when the validation slice has a single class."""
    from .errors import MetricUndefinedError

    try:
        return auc(scores, labels)
    except MetricUndefinedError:
        return 0.5


def train(kind: str, train_table: LogTable, val_table: LogTable, cfg: TrainConfig,
          model_cfg: ModelConfig | None = None) -> tuple[_ModelBase, TrainReport]:
    """Mini-batch training with early stopping on validation CTR+CVR AUC.

    Deterministic under (cfg.seed, data): initialization, shuffling and
    dropout all draw from named substreams of the seed. The best-validation
    parameter snapshot is restored before returning. epochs=0 returns the
    freshly initialized model (useful as an untrained reference).
    """
    if len(train_table) == 0 or len(val_table) == 0:
        raise ConfigError("train and validation datasets must be nonempty")
    if model_cfg is None:
        p_max = int(max(train_table.position.max(), val_table.position.max()))
        model_cfg = ModelConfig(feature_dim=train_table.feature_dim, p_max=p_max)
    if cfg.dropout_rate is not None and cfg.dropout_rate != model_cfg.dropout:
        model_cfg = ModelConfig(**{**asdict(model_cfg), "dropout": cfg.dropout_rate})

    root = RngState(cfg.seed)
    model = make_model(kind, model_cfg, root)
    opt_cls = AdamOptimizer if cfg.optimizer == "adam" else SgdOptimizer
    opt = opt_cls(model.params(), lr=cfg.learning_rate)
    shuffle_gen = root.substream("shuffle").generator()
    dropout_gen = root.substream("dropout").generator()

    feats = train_table.features
    pos = train_table.position
    click = train_table.click.astype(np.float64)
    conv = train_table.conversion.astype(np.float64)
    n = len(train_table)

    report = TrainReport()
    best_score = -np.inf
    best_snapshot = model.snapshot()
    best_epoch = 0
    bad_epochs = 0

    for epoch in range(1, cfg.epochs + 1):
        perm = shuffle_gen.permutation(n)
        sums = {"total": 0.0, "ctr": 0.0, "cvr": 0.0, "res": 0.0}
        for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            model.zero_grad()
            pred = model.forward(feats[idx], pos[idx], training=True, rng=dropout_gen)
            total, parts = total_loss(pred, click[idx], conv[idx],
                                      cfg.restriction, cfg.restriction_weight)
            if not np.isfinite(total):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no} "
                    f"(ctr={parts['ctr']}, cvr={parts['cvr']}, res={parts['res']})"
                )
            if kind == "pacc" and cfg.restriction == "cvr-le-ctr":
                # structurally zero: p_cvr = p_ctr * probability
                assert parts["res"] == 0.0, "pacc violated its factorization ordering"
            g_ctr, g_cvr = loss_grads(pred, click[idx], conv[idx],
                                      cfg.restriction, cfg.restriction_weight)
            model.backward(g_ctr, g_cvr)
            opt.step()
            w = len(idx)
            sums["total"] += total * w
            sums["ctr"] += parts["ctr"] * w
            sums["cvr"] += parts["cvr"] * w
            sums["res"] += parts["res"] * w

        val_pred = model.predict(val_table.features, val_table.position)
        auc_ctr = _safe_auc(val_pred.p_ctr, val_table.click)
        auc_cvr = _safe_auc(val_pred.p_cvr, val_table.conversion)
        report.epochs.append(EpochStats(
            epoch, sums["total"] / n, sums["ctr"] / n, sums["cvr"] / n, sums["res"] / n,
            auc_ctr, auc_cvr,
        ))

        score = auc_ctr + auc_cvr
        if score > best_score:
            best_score = score
            best_snapshot = model.snapshot()
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > cfg.patience:
                break

    if cfg.keep == "best":
        model.restore(best_snapshot)
    report.best_epoch = best_epoch
    return model, report


def save_checkpoint(model: _ModelBase, path) -> None:
    path = Path(path)
    meta = {
        "format": _CHECKPOINT_FORMAT,
        "version": _CHECKPOINT_VERSION,
        "kind": model.kind,
        "config": asdict(model.cfg),
        "params": [p.name for p in model.params()],
    }
    arrays = {f"param_{i:03d}": p.value for i, p in enumerate(model.params())}
    np.savez(path, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path) -> _ModelBase:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            if "meta" not in data:
                raise CheckpointError(f"{path}: missing metadata record")
            meta = json.loads(str(data["meta"]))
            if meta.get("format") != _CHECKPOINT_FORMAT:
                raise CheckpointError(f"{path}: not a model checkpoint")
            if meta.get("version") != _CHECKPOINT_VERSION:
                raise CheckpointError(
                    f"{path}: checkpoint version {meta.get('version')} unsupported "
                    f"(expected {_CHECKPOINT_VERSION})"
                )
            cfg = ModelConfig(**meta["config"])
            model = make_model(meta["kind"], cfg)
            params = model.params()
            names = meta.get("params", [])
            if len(names) != len(params):
                raise CheckpointError(
                    f"{path}: checkpoint lists {len(names)} parameters, model has {len(params)}"
                )
            for i, p in enumerate(params):
                key = f"param_{i:03d}"
                if key not in data:
                    raise CheckpointError(f"{path}: missing array {key} ({p.name})")
                value = data[key]
                if value.shape != p.value.shape:
                    raise CheckpointError(
                        f"{path}: {p.name} has shape {value.shape}, expected {p.value.shape}"
                    )
                p.value[...] = value
    except (OSError, ValueError, KeyError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc})") from exc
    return model
