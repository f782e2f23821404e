"""Ranking-quality and debiasing metrics.

AUC uses midranks, so tied scores count half — identical to the O(n^2)
pairwise definition. PAUC is AUC within each logged-position bucket,
aggregated by the bucket's positive-negative pair count; it isolates
within-position discrimination from position effects. MRR ranks items by
model score within each query (descending, ties broken by item_id for
reproducibility) and averages the reciprocal rank of the first positive over
queries that have one. Weighted MRR averages every positive's reciprocal
rank, weighted by its inverse-examination weight and normalized by the
weight sum. In ``evaluate`` the rank source for the MRR family is the
model's prediction at the reference position, so the logged position enters
those metrics only through the weights.

Every metric depends only on the ordering of the scores, so all of them are
invariant under strictly increasing score transforms.

Weights: for the factorized click model the weight is the learned
examination ratio P(s|1)/P(s|p). For any other model the same quantity is
extracted counterfactually, as the prediction ratio between the item moved
to the reference position and the item at its logged position; applied to
the factorized model this reproduces its table exactly, and for a
position-blind model every weight is 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, MetricUndefinedError, ShapeError
from .models import PaccModel, _ModelBase, counterfactual_forward
from .simlog import LogTable, PropensityTable

__all__ = [
    "ScoredExamples",
    "TaskMetrics",
    "MetricsReport",
    "auc",
    "pauc",
    "mrr",
    "weighted_mrr",
    "pacc_weights",
    "counterfactual_weights",
    "evaluate",
]

TASKS = ("ctr", "cvr")

# Counterfactual-ratio denominators below this are clamped and flagged.
WEIGHT_DENOM_FLOOR = 1e-9


@dataclass
class ScoredExamples:
    """Column-wise bundle of scored impressions for one task."""

    query_id: np.ndarray
    position: np.ndarray
    score: np.ndarray
    label: np.ndarray
    weight: np.ndarray
    item_id: np.ndarray

    def __post_init__(self):
        n = len(self.score)
        for name in ("query_id", "position", "label", "weight", "item_id"):
            if len(getattr(self, name)) != n:
                raise ShapeError(f"column {name} length differs from score length {n}")
        if np.any(self.weight <= 0.0):
            raise DomainError("weights must be positive")
        if not np.all(np.isfinite(self.score)):
            raise DomainError("scores must be finite")


def _validate_binary(labels) -> np.ndarray:
    y = np.asarray(labels)
    if y.size and not np.isin(y, (0, 1)).all():
        raise DomainError("labels must be 0 or 1")
    return y.astype(np.int64)


def _midranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks, tied scores sharing the mean of their rank range."""
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    n = len(s)
    boundaries = np.flatnonzero(s[1:] != s[:-1]) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [n]])
    mid = (starts + ends + 1) / 2.0
    ranks_sorted = np.repeat(mid, ends - starts)
    ranks = np.empty(n)
    ranks[order] = ranks_sorted
    return ranks


def auc(scores, labels) -> float:
    """Probability that a random positive outranks a random negative,
    ties counting one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = _validate_binary(labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("AUC needs at least one positive and one negative")
    ranks = _midranks(s)
    pos_rank_sum = float(ranks[y == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pauc(scores, labels, positions) -> float:
    """Position-wise AUC: per-bucket AUC aggregated by pair count.

    Buckets missing a class are skipped; with no usable bucket the metric is
    undefined.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _validate_binary(labels)
    pos = np.asarray(positions, dtype=np.int64)
    total = 0.0
    total_pairs = 0.0
    for p in np.unique(pos):
        mask = pos == p
        n_pos = int(y[mask].sum())
        n_neg = int(mask.sum()) - n_pos
        if n_pos == 0 or n_neg == 0:
            continue
        pairs = n_pos * n_neg
        total += auc(s[mask], y[mask]) * pairs
        total_pairs += pairs
    if total_pairs == 0:
        raise MetricUndefinedError("PAUC: no position bucket contains both classes")
    return total / total_pairs


def _query_ranks(scores, query_ids, item_ids, positions=None, rank_by="score"):
    """Per-item 0-based rank within its query.

    rank_by='score' orders by descending score, ties broken by ascending
    item_id. rank_by='position' orders by the logged position instead (the
    literal logged-ranking variant, for comparison runs).
    """
    if rank_by == "score":
        key = -np.asarray(scores, dtype=np.float64)
    elif rank_by == "position":
        if positions is None:
            raise ConfigError("rank_by='position' requires positions")
        key = np.asarray(positions, dtype=np.float64)
    else:
        raise ConfigError(f"rank_by must be 'score' or 'position', got {rank_by!r}")
    qid = np.asarray(query_ids)
    order = np.lexsort((np.asarray(item_ids), key, qid))
    sorted_qid = qid[order]
    starts = np.concatenate([[0], np.flatnonzero(sorted_qid[1:] != sorted_qid[:-1]) + 1])
    group_start = np.repeat(starts, np.diff(np.concatenate([starts, [len(qid)]])))
    ranks_sorted = np.arange(len(qid)) - group_start
    ranks = np.empty(len(qid), dtype=np.int64)
    ranks[order] = ranks_sorted
    return ranks, order, starts


def mrr(scores, labels, query_ids, item_ids, positions=None, rank_by="score") -> float:
    """Mean over queries (with at least one positive) of the reciprocal rank
    of their highest-ranked positive."""
    y = _validate_binary(labels)
    ranks, order, starts = _query_ranks(scores, query_ids, item_ids, positions, rank_by)
    qid = np.asarray(query_ids)[order]
    y_sorted = y[order]
    ranks_sorted = ranks[order]

    pos_idx = np.flatnonzero(y_sorted == 1)
    if len(pos_idx) == 0:
        raise MetricUndefinedError("MRR needs at least one query with a positive")
    group_of = np.searchsorted(starts, pos_idx, side="right") - 1
    _, first_idx = np.unique(group_of, return_index=True)
    best_ranks = ranks_sorted[pos_idx[first_idx]]
    return float(np.mean(1.0 / (best_ranks + 1.0)))


def weighted_mrr(scores, labels, query_ids, item_ids, weights,
                 positions=None, rank_by="score") -> float:
    """Weighted mean of every positive's reciprocal rank under the per-query
    ordering, normalized by the weight sum."""
    y = _validate_binary(labels)
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w[y == 1] <= 0.0):
        raise DomainError("weights must be positive")
    ranks, _, _ = _query_ranks(scores, query_ids, item_ids, positions, rank_by)
    pos_mask = y == 1
    if not pos_mask.any():
        raise MetricUndefinedError("weighted MRR needs at least one positive")
    rr = 1.0 / (ranks[pos_mask] + 1.0)
    wp = w[pos_mask]
    return float(np.sum(wp * rr) / np.sum(wp))


def pacc_weights(positions, model: PaccModel) -> np.ndarray:
    """Inverse-examination weights from the learned propensity table,
    normalized so position 1 has weight exactly 1."""
    table = model.propensity_table().probabilities
    pos = np.asarray(positions, dtype=np.int64)
    return table[0] / table[pos - 1]


def counterfactual_weights(model: _ModelBase, table: LogTable, task: str = "ctr",
                           reference: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Weights from two counterfactual forwards: prediction with the item
    moved to the reference position over prediction at the logged position.

    The constant examination factor at the reference position is dropped
    (the weights are only ever used relatively). Returns (weights, clamped)
    where clamped flags records whose denominator hit the floor.
    """
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
    at_logged, at_ref = counterfactual_forward(model, table.features, table.position, reference)
    num = at_ref.p_ctr if task == "ctr" else at_ref.p_cvr
    den = at_logged.p_ctr if task == "ctr" else at_logged.p_cvr
    clamped = den < WEIGHT_DENOM_FLOOR
    safe_den = np.where(clamped, WEIGHT_DENOM_FLOOR, den)
    return num / safe_den, clamped


@dataclass
class TaskMetrics:
    auc: float
    pauc: float
    mrr: float
    weighted_mrr: float


@dataclass
class MetricsReport:
    """All four metrics for both tasks, plus the evaluation counts."""

    ctr: TaskMetrics
    cvr: TaskMetrics
    n_queries: int
    n_click_pos: int
    n_conv_pos: int
    n_weight_clamped: int

    def rows(self, model_name: str) -> list[tuple[str, str, str, float]]:
        out = []
        for task in TASKS:
            tm = getattr(self, task)
            for metric in ("weighted_mrr", "mrr", "pauc", "auc"):
                out.append((model_name, task, metric, getattr(tm, metric)))
        return out

    def format_table(self, model_name: str = "model") -> str:
        header = (
            f"{'model':<10} {'task':<4} {'wMRR':>8} {'MRR':>8} {'PAUC':>8} {'AUC':>8}"
        )
        lines = [header]
        for task in TASKS:
            tm = getattr(self, task)
            lines.append(
                f"{model_name:<10} {task:<4} {tm.weighted_mrr:>8.4f} {tm.mrr:>8.4f} "
                f"{tm.pauc:>8.4f} {tm.auc:>8.4f}"
            )
        lines.append(
            f"queries={self.n_queries} clicks={self.n_click_pos} "
            f"conversions={self.n_conv_pos} clamped_weights={self.n_weight_clamped}"
        )
        return "\n".join(lines)


def evaluate(model: _ModelBase, table: LogTable, rank_by: str = "score",
             reference: int = 1, propensity: PropensityTable | None = None
             ) -> MetricsReport:
    """Score a model on a log: AUC/PAUC/MRR/weighted-MRR for both tasks.

    CTR metrics use click labels against p_ctr; CVR metrics use conversion
    labels against p_cvr, over all impressions. AUC and PAUC score the
    predictions at the logged positions (probability quality of the logged
    impressions; PAUC is bucket-wise so a per-position factor cannot help
    it). MRR and weighted MRR rank by the model's prediction with every item
    moved to the reference position -- its position-neutral ranking -- so the
    logged position enters those metrics only through the propensity
    weights.

    Weights: by default each model supplies its own (learned examination
    table for the factorized model, counterfactual prediction ratios
    otherwise), the only option on production logs; a position-blind model
    then gets weight 1 everywhere and its weighted MRR equals the positives'
    mean reciprocal rank. When the log is synthetic and the ground-truth
    examination ``propensity`` table is passed, every model is weighted by
    the true inverse propensities instead, which makes weighted MRR
    comparable across models (the same debiased estimand for all).
    """
    at_logged, at_ref = counterfactual_forward(
        model, table.features, table.position, reference
    )
    n_clamped = 0
    weights = {}
    if propensity is not None:
        probs = propensity.probabilities
        w = probs[reference - 1] / probs[table.position - 1]
        weights = {"ctr": w, "cvr": w}
    elif isinstance(model, PaccModel):
        w = pacc_weights(table.position, model)
        weights = {"ctr": w, "cvr": w}
    else:
        for task in TASKS:
            num = at_ref.p_ctr if task == "ctr" else at_ref.p_cvr
            den = at_logged.p_ctr if task == "ctr" else at_logged.p_cvr
            clamped = den < WEIGHT_DENOM_FLOOR
            weights[task] = num / np.where(clamped, WEIGHT_DENOM_FLOOR, den)
            n_clamped += int(clamped.sum())

    per_task = {}
    for task, logged_scores, ref_scores, labels in (
        ("ctr", at_logged.p_ctr, at_ref.p_ctr, table.click),
        ("cvr", at_logged.p_cvr, at_ref.p_cvr, table.conversion),
    ):
        per_task[task] = TaskMetrics(
            auc=auc(logged_scores, labels),
            pauc=pauc(logged_scores, labels, table.position),
            mrr=mrr(ref_scores, labels, table.query_id, table.item_id,
                    table.position, rank_by),
            weighted_mrr=weighted_mrr(ref_scores, labels, table.query_id, table.item_id,
                                      weights[task], table.position, rank_by),
        )
    return MetricsReport(
        ctr=per_task["ctr"],
        cvr=per_task["cvr"],
        n_queries=len(np.unique(table.query_id)),
        n_click_pos=int(table.click.sum()),
        n_conv_pos=int(table.conversion.sum()),
        n_weight_clamped=n_clamped,
    )
