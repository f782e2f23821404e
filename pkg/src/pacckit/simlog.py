"""Synthetic position-biased click/conversion logs with known ground truth.

The generative process per query: draw K feature vectors, rank them by a
noisy relevance score (true click logit plus Gaussian policy noise) to assign
positions 1..K, then sample

    examined   ~ Bernoulli(theta_p),  theta_p = (1/p) ** exam_exponent
    click      = examined * Bernoulli(sigmoid(w_ctr . [f; 1]))
    conversion = click    * Bernoulli(sigmoid(w_cvr . [f; 1]))

The noisy-relevance policy is what creates the position <-> feature
correlation that biases naive models; ``policy_noise=inf`` gives a fully
random policy (no correlation). Conversion is drawn conditionally on click
only, never directly on position. The exact examination table is returned
alongside the records so debiasing can be scored against ground truth.

File format (the canonical interchange for every CLI command):
    header  query_id,item_id,position,click,conversion,f0,...,f{d-1}
    ints in base 10, features printed with 9 significant digits.
Features are quantized to 9 significant digits at generation time, which
makes write -> read an exact identity and regeneration byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, DomainError, LogParseError, ShapeError
from .rng import RngState

__all__ = [
    "LogRecord",
    "LogTable",
    "GenConfig",
    "PropensityTable",
    "generate_logs",
    "one_hot_position",
    "one_hot_positions",
    "write_logs",
    "read_logs",
    "write_propensity",
    "read_propensity",
    "split_dataset",
    "label_weights",
]


@dataclass
class LogRecord:
    """One impression row."""

    query_id: int
    item_id: int
    features: np.ndarray
    position: int
    click: int
    conversion: int

    def __eq__(self, other) -> bool:
        if not isinstance(other, LogRecord):
            return NotImplemented
        return (
            self.query_id == other.query_id
            and self.item_id == other.item_id
            and self.position == other.position
            and self.click == other.click
            and self.conversion == other.conversion
            and np.array_equal(self.features, other.features)
        )


class LogTable:
    """Column-oriented impression log; rows view as LogRecord.

    Arrays are kept column-wise so a million-row log costs megabytes, while
    indexing still hands back per-row records.
    """

    def __init__(self, query_id, item_id, position, click, conversion, features):
        self.query_id = np.asarray(query_id, dtype=np.int64)
        self.item_id = np.asarray(item_id, dtype=np.int64)
        self.position = np.asarray(position, dtype=np.int64)
        self.click = np.asarray(click, dtype=np.int64)
        self.conversion = np.asarray(conversion, dtype=np.int64)
        self.features = np.ascontiguousarray(features, dtype=np.float64)
        n = len(self.query_id)
        for name in ("item_id", "position", "click", "conversion"):
            if len(getattr(self, name)) != n:
                raise ShapeError(f"column {name} has length {len(getattr(self, name))}, expected {n}")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ShapeError(f"features must be ({n}, d), got {self.features.shape}")
        if np.any(self.conversion > self.click):
            raise DomainError("conversion=1 requires click=1")

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return len(self.query_id)

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            return LogRecord(
                int(self.query_id[i]),
                int(self.item_id[i]),
                self.features[i].copy(),
                int(self.position[i]),
                int(self.click[i]),
                int(self.conversion[i]),
            )
        return self.select(np.arange(len(self))[i])

    def __iter__(self) -> Iterator[LogRecord]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LogTable):
            return NotImplemented
        return (
            np.array_equal(self.query_id, other.query_id)
            and np.array_equal(self.item_id, other.item_id)
            and np.array_equal(self.position, other.position)
            and np.array_equal(self.click, other.click)
            and np.array_equal(self.conversion, other.conversion)
            and np.array_equal(self.features, other.features)
        )

    def select(self, idx) -> "LogTable":
        return LogTable(
            self.query_id[idx],
            self.item_id[idx],
            self.position[idx],
            self.click[idx],
            self.conversion[idx],
            self.features[idx],
        )


@dataclass
class PropensityTable:
    """Per-position examination probability P(seen | position).

    Index p-1 holds the entry for position p. Entries live in (0, 1]; the
    generated curve is monotone non-increasing with its maximum at position 1.
    """

    probabilities: np.ndarray

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        if self.probabilities.ndim != 1 or len(self.probabilities) == 0:
            raise ShapeError("propensity table must be a nonempty 1-D vector")
        if np.any(self.probabilities <= 0.0) or np.any(self.probabilities > 1.0):
            raise DomainError("propensities must lie in (0, 1]")

    @property
    def p_max(self) -> int:
        return len(self.probabilities)

    def ratio_to_first(self) -> np.ndarray:
        """Scale-free form P(s|p) / P(s|1) used wherever only ratios matter."""
        return self.probabilities / self.probabilities[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PropensityTable):
            return NotImplemented
        return np.array_equal(self.probabilities, other.probabilities)


@dataclass
class GenConfig:
    """Parameters of the synthetic-log generative process."""

    num_queries: int
    items_per_query: int
    feature_dim: int
    exam_exponent: float
    w_ctr: np.ndarray
    w_cvr: np.ndarray
    policy_noise: float
    seed: int
    p_max: int | None = None

    def __post_init__(self):
        self.w_ctr = np.asarray(self.w_ctr, dtype=np.float64)
        self.w_cvr = np.asarray(self.w_cvr, dtype=np.float64)
        if self.p_max is None:
            self.p_max = self.items_per_query
        problems = []
        if self.num_queries < 1:
            problems.append(f"num_queries must be >= 1, got {self.num_queries}")
        if self.items_per_query < 1:
            problems.append(f"items_per_query must be >= 1, got {self.items_per_query}")
        if self.feature_dim < 1:
            problems.append(f"feature_dim must be >= 1, got {self.feature_dim}")
        if self.exam_exponent < 0.0:
            problems.append(f"exam_exponent must be >= 0, got {self.exam_exponent}")
        if self.items_per_query > self.p_max:
            problems.append(
                f"items_per_query {self.items_per_query} exceeds p_max {self.p_max}"
            )
        if self.policy_noise < 0.0:
            problems.append(f"policy_noise must be >= 0, got {self.policy_noise}")
        for name, w in (("w_ctr", self.w_ctr), ("w_cvr", self.w_cvr)):
            if w.shape != (self.feature_dim + 1,):
                problems.append(
                    f"{name} must have length feature_dim+1={self.feature_dim + 1}, got {w.shape}"
                )
        if problems:
            raise ConfigError(problems)


def label_weights(feature_dim: int, rng: np.random.Generator,
                  logit_std: float, base_rate: float) -> np.ndarray:
    """Draw a ground-truth weight vector [direction; bias].

    The direction is scaled so the logit has standard deviation ~logit_std
    over standard-normal features; the bias centers the rate near base_rate.
    """
    if not 0.0 < base_rate < 1.0:
        raise DomainError(f"base_rate must be in (0, 1), got {base_rate}")
    direction = rng.standard_normal(feature_dim)
    direction *= logit_std / np.linalg.norm(direction)
    bias = np.log(base_rate / (1.0 - base_rate))
    return np.concatenate([direction, [bias]])


def _quantize_sig9(a: np.ndarray) -> np.ndarray:
    """Round to 9 significant decimal digits, numerically.

    The result is the double nearest to its own 9-digit decimal rendering, so
    printing with '%.9g' and re-parsing is an exact round trip.
    """
    out = np.zeros_like(a)
    nz = a != 0.0
    x = a[nz]
    exp = np.floor(np.log10(np.abs(x)))
    scale = np.power(10.0, 8.0 - exp)
    out[nz] = np.round(x * scale) / scale
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    pos = z >= 0.0
    ez = np.exp(np.where(pos, -z, z))
    return np.where(pos, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def generate_logs(cfg: GenConfig) -> tuple[LogTable, PropensityTable]:
    """Generate a synthetic log plus its exact examination table."""
    rng = RngState(cfg.seed).substream("generate").generator()
    q, k, d = cfg.num_queries, cfg.items_per_query, cfg.feature_dim

    feats = _quantize_sig9(rng.standard_normal((q, k, d)))
    ctr_logit = feats @ cfg.w_ctr[:d] + cfg.w_ctr[d]
    cvr_logit = feats @ cfg.w_cvr[:d] + cfg.w_cvr[d]

    if np.isinf(cfg.policy_noise):
        policy_score = rng.standard_normal((q, k))
    else:
        policy_score = ctr_logit + cfg.policy_noise * rng.standard_normal((q, k))

    order = np.argsort(-policy_score, axis=1, kind="stable")
    position = np.empty((q, k), dtype=np.int64)
    np.put_along_axis(position, order, np.arange(1, k + 1, dtype=np.int64)[None, :], axis=1)

    theta = (1.0 / np.arange(1, cfg.p_max + 1, dtype=np.float64)) ** cfg.exam_exponent
    examined = rng.random((q, k)) < theta[position - 1]
    click = examined & (rng.random((q, k)) < _sigmoid(ctr_logit))
    conversion = click & (rng.random((q, k)) < _sigmoid(cvr_logit))

    query_id = np.repeat(np.arange(q, dtype=np.int64), k)
    item_id = np.arange(q * k, dtype=np.int64)
    table = LogTable(
        query_id,
        item_id,
        position.reshape(-1),
        click.reshape(-1).astype(np.int64),
        conversion.reshape(-1).astype(np.int64),
        feats.reshape(q * k, d),
    )
    return table, PropensityTable(theta)


def one_hot_position(p: int, p_max: int) -> np.ndarray:
    """One-hot encode a 1-based position into a length-p_max vector."""
    if not 1 <= p <= p_max:
        raise DomainError(f"position {p} out of range 1..{p_max}")
    v = np.zeros(p_max)
    v[p - 1] = 1.0
    return v


def one_hot_positions(positions: np.ndarray, p_max: int) -> np.ndarray:
    """Batch one-hot encoding, (B,) int positions -> (B, p_max)."""
    pos = np.asarray(positions, dtype=np.int64)
    if pos.size and (pos.min() < 1 or pos.max() > p_max):
        bad = pos[(pos < 1) | (pos > p_max)][0]
        raise DomainError(f"position {bad} out of range 1..{p_max}")
    out = np.zeros((len(pos), p_max))
    out[np.arange(len(pos)), pos - 1] = 1.0
    return out


def _fmt_feature(v: float) -> str:
    return format(v, ".9g")


def write_logs(table: LogTable, path) -> None:
    path = Path(path)
    d = table.feature_dim
    header = "query_id,item_id,position,click,conversion," + ",".join(
        f"f{j}" for j in range(d)
    )
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for i in range(len(table)):
            ints = (
                f"{table.query_id[i]},{table.item_id[i]},{table.position[i]},"
                f"{table.click[i]},{table.conversion[i]}"
            )
            feats = ",".join(_fmt_feature(v) for v in table.features[i])
            fh.write(ints + "," + feats + "\n")


def read_logs(path) -> LogTable:
    path = Path(path)
    with open(path, "r", newline="") as fh:
        header = fh.readline().rstrip("\n")
        cols = header.split(",")
        if cols[:5] != ["query_id", "item_id", "position", "click", "conversion"]:
            raise LogParseError(1, f"unexpected header {header!r}")
        d = len(cols) - 5
        if d < 1 or cols[5:] != [f"f{j}" for j in range(d)]:
            raise LogParseError(1, f"unexpected feature columns in header {header!r}")

        qid, iid, pos, clk, cnv, feats = [], [], [], [], [], []
        for line_no, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != 5 + d:
                raise LogParseError(line_no, f"expected {5 + d} columns, found {len(parts)}")
            try:
                q, it, p = int(parts[0]), int(parts[1]), int(parts[2])
                c, v = int(parts[3]), int(parts[4])
            except ValueError as exc:
                raise LogParseError(line_no, f"non-integer field: {exc}") from None
            if c not in (0, 1) or v not in (0, 1):
                raise LogParseError(line_no, f"click/conversion must be 0 or 1, got {c},{v}")
            if v > c:
                raise LogParseError(line_no, "conversion=1 with click=0")
            if p < 1:
                raise LogParseError(line_no, f"position must be >= 1, got {p}")
            try:
                row = [float(x) for x in parts[5:]]
            except ValueError as exc:
                raise LogParseError(line_no, f"non-numeric feature: {exc}") from None
            if not all(np.isfinite(row)):
                raise LogParseError(line_no, "non-finite feature value")
            qid.append(q)
            iid.append(it)
            pos.append(p)
            clk.append(c)
            cnv.append(v)
            feats.append(row)
    if not qid:
        raise LogParseError(2, "log file contains no rows")
    return LogTable(qid, iid, pos, clk, cnv, np.array(feats))


def write_propensity(table: PropensityTable, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("position,theta\n")
        for p, theta in enumerate(table.probabilities, start=1):
            fh.write(f"{p},{float(theta)!r}\n")


def read_propensity(path) -> PropensityTable:
    with open(path, "r", newline="") as fh:
        header = fh.readline().rstrip("\n")
        if header != "position,theta":
            raise LogParseError(1, f"unexpected header {header!r}")
        values = []
        for line_no, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != 2:
                raise LogParseError(line_no, f"expected 2 columns, found {len(parts)}")
            try:
                p, theta = int(parts[0]), float(parts[1])
            except ValueError as exc:
                raise LogParseError(line_no, str(exc)) from None
            if p != line_no - 1:
                raise LogParseError(line_no, f"positions must be consecutive from 1, got {p}")
            values.append(theta)
    return PropensityTable(np.array(values))


def split_dataset(table: LogTable, fractions: Sequence[float], seed: int
                  ) -> tuple[LogTable, LogTable, LogTable]:
    """Split at query granularity into (train, validation, test).

    All records of a query land in the same split; the assignment is a
    deterministic function of the seed. Original row order is preserved
    within each split.
    """
    fracs = [float(f) for f in fractions]
    if len(fracs) != 3:
        raise ConfigError(f"expected 3 split fractions, got {len(fracs)}")
    if any(f < 0.0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be nonnegative and sum to 1, got {fracs}")

    qids = np.unique(table.query_id)
    gen = RngState(seed).substream("split").generator()
    shuffled = gen.permutation(qids)
    n = len(qids)
    c1 = int(round(fracs[0] * n))
    c2 = int(round((fracs[0] + fracs[1]) * n))
    groups = (shuffled[:c1], shuffled[c1:c2], shuffled[c2:])
    names = ("train", "validation", "test")
    out = []
    for name, grp in zip(names, groups):
        if len(grp) == 0:
            raise ConfigError(f"{name} split is empty with fractions {fracs} over {n} queries")
        mask = np.isin(table.query_id, grp)
        out.append(table.select(np.flatnonzero(mask)))
    return tuple(out)
