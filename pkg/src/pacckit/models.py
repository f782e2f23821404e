"""The PACC and PACC-PE architectures plus two simplified baselines.

All four variants share the same skeleton: a shared feature embedding, one
tower per task, and an attention unit that decides how much information the
conversion path takes from the click path.

* ``pacc``     factorizes the click probability into a per-position
  examination probability (one free logit per position, from a dense layer
  over the one-hot position) times a position-free click-given-seen
  probability, and the conversion probability into the click probability
  times a position-free conversion-given-click probability. The
  factorization identities hold exactly on every forward, so the examination
  table can be read off the position head after training.
* ``pacc-pe``  routes position through a tower over the one-hot position
  whose projected output is attended to by the click path; the conversion
  path attends to projected click-tower output. No factorization is imposed:
  the restriction loss (training module) softly enforces the click-before-
  purchase ordering instead.
* ``naive``    ignores position entirely (its predictions are bit-identical
  under any position swap, by construction).
* ``posfeat``  appends the one-hot position to the input features and is
  otherwise the naive model.

Forward passes are deterministic in inference mode; training mode draws
dropout masks from the generator handed in by the trainer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError, ShapeError, StateError
from .nn import (
    AttentionUnit,
    DenseLayer,
    GateUnit,
    Param,
    Tower,
    sigmoid,
    sigmoid_backward,
)
from .rng import RngState
from .simlog import PropensityTable, one_hot_positions

__all__ = [
    "MODEL_KINDS",
    "ModelConfig",
    "Prediction",
    "PaccModel",
    "PaccPeModel",
    "BaselineModel",
    "make_model",
    "counterfactual_forward",
]

MODEL_KINDS = ("pacc", "pacc-pe", "naive", "posfeat")

_ATTENTION_KINDS = ("dot", "gate")


@dataclass
class ModelConfig:
    """Dimension hyperparameters shared by every model variant.

    d_info must equal d_tower: the attention unit projects both of its
    tokens (task-tower output and transferred info) with one shared set of
    weights, so the two token widths have to agree.
    """

    feature_dim: int
    p_max: int
    d_emb: int = 32
    d_tower: int = 32
    d_info: int = 32
    d_att: int = 16
    dropout: float = 0.2
    attention: str = "dot"
    # Where pacc-pe's conversion path takes its transferred click information
    # from: "attention" projects the position-aware click attention output
    # (all position dependence of the conversion estimate flows through the
    # click path), "tower" projects the position-free click tower output (the
    # conversion estimate then never sees position at all).
    pe_cvr_info: str = "attention"

    def __post_init__(self):
        problems = []
        for name in ("feature_dim", "p_max", "d_emb", "d_tower", "d_info", "d_att"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            problems.append(f"dropout must be in [0, 1), got {self.dropout}")
        if self.attention not in _ATTENTION_KINDS:
            problems.append(f"attention must be one of {_ATTENTION_KINDS}, got {self.attention!r}")
        if self.pe_cvr_info not in ("attention", "tower"):
            problems.append(
                f"pe_cvr_info must be 'attention' or 'tower', got {self.pe_cvr_info!r}"
            )
        if self.d_info != self.d_tower:
            problems.append(
                f"d_info ({self.d_info}) must equal d_tower ({self.d_tower}): "
                "attention projects both tokens with shared weights"
            )
        if problems:
            raise ConfigError(problems)


@dataclass
class Prediction:
    """Per-impression probability bundle.

    p_seen / p_ctr_given_seen / p_cvr_given_click_seen are populated by the
    pacc variant only; for it, p_ctr = p_seen * p_ctr_given_seen and
    p_cvr = p_ctr * p_cvr_given_click_seen hold exactly.
    """

    p_ctr: np.ndarray
    p_cvr: np.ndarray
    p_seen: np.ndarray | None = None
    p_ctr_given_seen: np.ndarray | None = None
    p_cvr_given_click_seen: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.p_ctr)


def _attention_unit(cfg: ModelConfig, rng) -> AttentionUnit | GateUnit:
    cls = AttentionUnit if cfg.attention == "dot" else GateUnit
    return cls(cfg.d_att, cfg.d_tower, rng)


def _concat_predictions(parts: list[Prediction]) -> Prediction:
    def cat(name):
        vals = [getattr(p, name) for p in parts]
        return None if vals[0] is None else np.concatenate(vals)

    return Prediction(
        p_ctr=cat("p_ctr"),
        p_cvr=cat("p_cvr"),
        p_seen=cat("p_seen"),
        p_ctr_given_seen=cat("p_ctr_given_seen"),
        p_cvr_given_click_seen=cat("p_cvr_given_click_seen"),
    )


class _ModelBase:
    kind: str
    cfg: ModelConfig

    def params(self) -> list[Param]:
        raise NotImplementedError

    def forward(self, features, positions, training=False, rng=None) -> Prediction:
        raise NotImplementedError

    def backward(self, g_pctr, g_pcvr) -> None:
        raise NotImplementedError

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()

    def _check_inputs(self, features, positions) -> tuple[np.ndarray, np.ndarray]:
        f = np.ascontiguousarray(features, dtype=np.float64)
        if f.ndim == 1:
            f = f[None, :]
        if f.ndim != 2 or f.shape[1] != self.cfg.feature_dim:
            raise ShapeError(
                f"features must be (B, {self.cfg.feature_dim}), got {f.shape}"
            )
        pos = np.atleast_1d(np.asarray(positions, dtype=np.int64))
        if len(pos) == 1 and len(f) > 1:
            pos = np.full(len(f), pos[0], dtype=np.int64)
        if len(pos) != len(f):
            raise ShapeError(f"{len(pos)} positions for {len(f)} feature rows")
        if len(pos) and (pos.min() < 1 or pos.max() > self.cfg.p_max):
            raise DomainError(f"positions must lie in 1..{self.cfg.p_max}")
        return f, pos

    def predict(self, features, positions, chunk: int = 65536) -> Prediction:
        """Inference over arbitrarily large inputs, bounded memory."""
        f, pos = self._check_inputs(features, positions)
        if len(f) <= chunk:
            return self.forward(f, pos, training=False)
        parts = [
            self.forward(f[i : i + chunk], pos[i : i + chunk], training=False)
            for i in range(0, len(f), chunk)
        ]
        return _concat_predictions(parts)

    def snapshot(self) -> list[np.ndarray]:
        return [p.value.copy() for p in self.params()]

    def restore(self, values: Sequence[np.ndarray]) -> None:
        params = self.params()
        if len(values) != len(params):
            raise ShapeError(f"snapshot has {len(values)} arrays, model has {len(params)}")
        for p, v in zip(params, values):
            if p.value.shape != v.shape:
                raise ShapeError(f"{p.name}: snapshot shape {v.shape} != {p.value.shape}")
            p.value[...] = v


class PaccModel(_ModelBase):
    kind = "pacc"

    def __init__(self, cfg: ModelConfig, rng: RngState | None = None):
        self.cfg = cfg
        gen = (rng or RngState(0)).substream("init").generator()
        c = cfg
        tower_dims = [c.d_emb, c.d_tower, c.d_tower, c.d_tower]
        self.shared_embed = DenseLayer(c.d_emb, c.feature_dim, gen)
        self.ctr_tower = Tower(tower_dims, c.dropout, gen)
        self.cvr_tower = Tower(tower_dims, c.dropout, gen)
        self.ctr_head = DenseLayer(1, c.d_tower, gen)
        self.info_ctr_proj = Tower([c.d_tower, c.d_info], c.dropout, gen)
        self.cvr_attention = _attention_unit(c, gen)
        self.cvr_head = DenseLayer(1, c.d_att, gen)
        self.position_head = DenseLayer(1, c.p_max, gen)
        self._cache = None

    def params(self) -> list[Param]:
        return (
            self.shared_embed.params("embed")
            + self.ctr_tower.params("ctr_tower")
            + self.cvr_tower.params("cvr_tower")
            + self.ctr_head.params("ctr_head")
            + self.info_ctr_proj.params("info_ctr")
            + self.cvr_attention.params("cvr_att")
            + self.cvr_head.params("cvr_head")
            + self.position_head.params("pos_head")
        )

    def forward(self, features, positions, training=False, rng=None) -> Prediction:
        f, pos = self._check_inputs(features, positions)
        cache = bool(training)
        v = self.shared_embed.forward(f, cache=cache)
        t_ctr = self.ctr_tower.forward(v, training, rng, cache=cache)
        t_cvr = self.cvr_tower.forward(v, training, rng, cache=cache)
        p_cgs = sigmoid(self.ctr_head.forward(t_ctr, cache=cache)[:, 0])
        info = self.info_ctr_proj.forward(t_ctr, training, rng, cache=cache)
        a_cvr = self.cvr_attention.forward(t_cvr, info, cache=cache)
        p_cvgs = sigmoid(self.cvr_head.forward(a_cvr, cache=cache)[:, 0])
        onehot = one_hot_positions(pos, self.cfg.p_max)
        p_seen = sigmoid(self.position_head.forward(onehot, cache=cache)[:, 0])

        p_ctr = p_seen * p_cgs
        p_cvr = p_ctr * p_cvgs
        if cache:
            self._cache = (p_seen, p_cgs, p_cvgs, p_ctr)
        return Prediction(p_ctr, p_cvr, p_seen, p_cgs, p_cvgs)

    def backward(self, g_pctr, g_pcvr) -> None:
        if self._cache is None:
            raise StateError("backward requires a cached training forward")
        p_seen, p_cgs, p_cvgs, p_ctr = self._cache
        g_pcvgs = g_pcvr * p_ctr
        g_pctr_total = g_pctr + g_pcvr * p_cvgs
        g_pseen = g_pctr_total * p_cgs
        g_pcgs = g_pctr_total * p_seen

        self.position_head.backward(sigmoid_backward(p_seen, g_pseen)[:, None])
        g_acvr = self.cvr_head.backward(sigmoid_backward(p_cvgs, g_pcvgs)[:, None])
        g_tcvr, g_info = self.cvr_attention.backward(g_acvr)
        g_tctr = self.info_ctr_proj.backward(g_info)
        g_tctr = g_tctr + self.ctr_head.backward(sigmoid_backward(p_cgs, g_pcgs)[:, None])
        g_v = self.ctr_tower.backward(g_tctr) + self.cvr_tower.backward(g_tcvr)
        self.shared_embed.backward(g_v)

    def propensity_table(self) -> PropensityTable:
        """Learned P(seen | position); meaningful only as ratios to position 1
        (an overall scale is absorbed by the click-given-seen head)."""
        eye = np.eye(self.cfg.p_max)
        probs = sigmoid(self.position_head.forward(eye, cache=False)[:, 0])
        return PropensityTable(probs)


class PaccPeModel(_ModelBase):
    kind = "pacc-pe"

    def __init__(self, cfg: ModelConfig, rng: RngState | None = None):
        self.cfg = cfg
        gen = (rng or RngState(0)).substream("init").generator()
        c = cfg
        tower_dims = [c.d_emb, c.d_tower, c.d_tower, c.d_tower]
        self.shared_embed = DenseLayer(c.d_emb, c.feature_dim, gen)
        self.pos_tower = Tower([c.p_max, c.d_tower, c.d_tower, c.d_tower], c.dropout, gen)
        self.ctr_tower = Tower(tower_dims, c.dropout, gen)
        self.cvr_tower = Tower(tower_dims, c.dropout, gen)
        self.info_pos_proj = Tower([c.d_tower, c.d_info], c.dropout, gen)
        ctr_info_in = c.d_att if c.pe_cvr_info == "attention" else c.d_tower
        self.info_ctr_proj = Tower([ctr_info_in, c.d_info], c.dropout, gen)
        self.ctr_attention = _attention_unit(c, gen)
        self.cvr_attention = _attention_unit(c, gen)
        self.ctr_head = DenseLayer(1, c.d_att, gen)
        self.cvr_head = DenseLayer(1, c.d_att, gen)
        self._cache = None

    def params(self) -> list[Param]:
        return (
            self.shared_embed.params("embed")
            + self.pos_tower.params("pos_tower")
            + self.ctr_tower.params("ctr_tower")
            + self.cvr_tower.params("cvr_tower")
            + self.info_pos_proj.params("info_pos")
            + self.info_ctr_proj.params("info_ctr")
            + self.ctr_attention.params("ctr_att")
            + self.cvr_attention.params("cvr_att")
            + self.ctr_head.params("ctr_head")
            + self.cvr_head.params("cvr_head")
        )

    def forward(self, features, positions, training=False, rng=None) -> Prediction:
        f, pos = self._check_inputs(features, positions)
        cache = bool(training)
        v = self.shared_embed.forward(f, cache=cache)
        onehot = one_hot_positions(pos, self.cfg.p_max)
        t_pos = self.pos_tower.forward(onehot, training, rng, cache=cache)
        t_ctr = self.ctr_tower.forward(v, training, rng, cache=cache)
        t_cvr = self.cvr_tower.forward(v, training, rng, cache=cache)
        info_pos = self.info_pos_proj.forward(t_pos, training, rng, cache=cache)
        a_ctr = self.ctr_attention.forward(t_ctr, info_pos, cache=cache)
        p_ctr = sigmoid(self.ctr_head.forward(a_ctr, cache=cache)[:, 0])
        ctr_info_src = a_ctr if self.cfg.pe_cvr_info == "attention" else t_ctr
        info_ctr = self.info_ctr_proj.forward(ctr_info_src, training, rng, cache=cache)
        a_cvr = self.cvr_attention.forward(t_cvr, info_ctr, cache=cache)
        p_cvr = sigmoid(self.cvr_head.forward(a_cvr, cache=cache)[:, 0])
        if cache:
            self._cache = (p_ctr, p_cvr)
        return Prediction(p_ctr, p_cvr)

    def backward(self, g_pctr, g_pcvr) -> None:
        if self._cache is None:
            raise StateError("backward requires a cached training forward")
        p_ctr, p_cvr = self._cache
        g_acvr = self.cvr_head.backward(sigmoid_backward(p_cvr, g_pcvr)[:, None])
        g_tcvr, g_infoctr = self.cvr_attention.backward(g_acvr)
        g_ctr_info_src = self.info_ctr_proj.backward(g_infoctr)
        g_actr = self.ctr_head.backward(sigmoid_backward(p_ctr, g_pctr)[:, None])
        if self.cfg.pe_cvr_info == "attention":
            g_actr = g_actr + g_ctr_info_src
            g_tctr, g_infopos = self.ctr_attention.backward(g_actr)
        else:
            g_tctr, g_infopos = self.ctr_attention.backward(g_actr)
            g_tctr = g_tctr + g_ctr_info_src
        g_tpos = self.info_pos_proj.backward(g_infopos)
        self.pos_tower.backward(g_tpos)
        g_v = self.ctr_tower.backward(g_tctr) + self.cvr_tower.backward(g_tcvr)
        self.shared_embed.backward(g_v)


class BaselineModel(_ModelBase):
    """Position-unaware multi-task baseline (``naive``) and its variant with
    the one-hot position appended to the features (``posfeat``)."""

    def __init__(self, cfg: ModelConfig, rng: RngState | None = None, use_position: bool = False):
        self.cfg = cfg
        self.use_position = use_position
        self.kind = "posfeat" if use_position else "naive"
        gen = (rng or RngState(0)).substream("init").generator()
        c = cfg
        in_dim = c.feature_dim + (c.p_max if use_position else 0)
        tower_dims = [c.d_emb, c.d_tower, c.d_tower, c.d_tower]
        self.shared_embed = DenseLayer(c.d_emb, in_dim, gen)
        self.ctr_tower = Tower(tower_dims, c.dropout, gen)
        self.cvr_tower = Tower(tower_dims, c.dropout, gen)
        self.ctr_head = DenseLayer(1, c.d_tower, gen)
        self.info_ctr_proj = Tower([c.d_tower, c.d_info], c.dropout, gen)
        self.cvr_attention = _attention_unit(c, gen)
        self.cvr_head = DenseLayer(1, c.d_att, gen)
        self._cache = None

    def params(self) -> list[Param]:
        return (
            self.shared_embed.params("embed")
            + self.ctr_tower.params("ctr_tower")
            + self.cvr_tower.params("cvr_tower")
            + self.ctr_head.params("ctr_head")
            + self.info_ctr_proj.params("info_ctr")
            + self.cvr_attention.params("cvr_att")
            + self.cvr_head.params("cvr_head")
        )

    def forward(self, features, positions, training=False, rng=None) -> Prediction:
        f, pos = self._check_inputs(features, positions)
        cache = bool(training)
        if self.use_position:
            f = np.concatenate([f, one_hot_positions(pos, self.cfg.p_max)], axis=1)
        v = self.shared_embed.forward(f, cache=cache)
        t_ctr = self.ctr_tower.forward(v, training, rng, cache=cache)
        t_cvr = self.cvr_tower.forward(v, training, rng, cache=cache)
        p_ctr = sigmoid(self.ctr_head.forward(t_ctr, cache=cache)[:, 0])
        info = self.info_ctr_proj.forward(t_ctr, training, rng, cache=cache)
        a_cvr = self.cvr_attention.forward(t_cvr, info, cache=cache)
        p_cvr = sigmoid(self.cvr_head.forward(a_cvr, cache=cache)[:, 0])
        if cache:
            self._cache = (p_ctr, p_cvr)
        return Prediction(p_ctr, p_cvr)

    def backward(self, g_pctr, g_pcvr) -> None:
        if self._cache is None:
            raise StateError("backward requires a cached training forward")
        p_ctr, p_cvr = self._cache
        g_acvr = self.cvr_head.backward(sigmoid_backward(p_cvr, g_pcvr)[:, None])
        g_tcvr, g_info = self.cvr_attention.backward(g_acvr)
        g_tctr = self.info_ctr_proj.backward(g_info)
        g_tctr = g_tctr + self.ctr_head.backward(sigmoid_backward(p_ctr, g_pctr)[:, None])
        g_v = self.ctr_tower.backward(g_tctr) + self.cvr_tower.backward(g_tcvr)
        self.shared_embed.backward(g_v)


def make_model(kind: str, cfg: ModelConfig, rng: RngState | None = None) -> _ModelBase:
    if kind == "pacc":
        return PaccModel(cfg, rng)
    if kind == "pacc-pe":
        return PaccPeModel(cfg, rng)
    if kind == "naive":
        return BaselineModel(cfg, rng, use_position=False)
    if kind == "posfeat":
        return BaselineModel(cfg, rng, use_position=True)
    raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def counterfactual_forward(model: _ModelBase, features, logged_positions, swap_positions
                           ) -> tuple[Prediction, Prediction]:
    """Inference-mode predictions at the logged and at the swapped position.

    ``swap_positions`` may be a scalar (every record moved to that position)
    or a per-record array. Both passes share the features; only the position
    input differs, so position-blind models return bit-identical bundles.
    """
    f = np.ascontiguousarray(features, dtype=np.float64)
    if f.ndim == 1:
        f = f[None, :]
    logged = np.atleast_1d(np.asarray(logged_positions, dtype=np.int64))
    swap = np.asarray(swap_positions, dtype=np.int64)
    if swap.ndim == 0:
        swap = np.full(len(f), int(swap), dtype=np.int64)
    at_logged = model.predict(f, logged)
    at_swap = model.predict(f, swap)
    return at_logged, at_swap
