"""Run configuration: flat ``key = value`` text with section headers.

Configs are versionable experiment artifacts; every field has a default, so
an empty file is a valid config. Unknown sections or keys are rejected, and
validation reports every offending key at once. Command-line flags override
file values; the PACCKIT_OUT environment variable overrides the configured
output directory (flags still win over the environment).

Sections and defaults::

    [data]
    num_queries = 2000        # queries to simulate
    items_per_query = 10      # K; positions are a permutation of 1..K
    feature_dim = 8
    exam_exponent = 1.0       # examination curve (1/p)**gamma
    policy_noise = 1.0        # ranking-noise sigma; inf = random policy
    p_max = 10                # defaults to items_per_query
    ctr_base = 0.05           # target click rate for examined items
    ctr_logit_std = 1.25      # spread of the true click logit
    cvr_base = 0.1            # target conversion rate for clicked items
    cvr_logit_std = 1.0
    split = 0.7,0.1,0.2       # train/validation/test query fractions

    [model]
    kind = pacc               # pacc | pacc-pe | naive | posfeat
    d_emb = 32
    d_tower = 32
    d_info = 32               # must equal d_tower (shared attention projections)
    d_att = 16
    dropout = 0.2
    attention = dot           # dot | gate

    [train]
    epochs = 15
    batch_size = 256
    learning_rate = 0.001
    restriction = cvr-le-ctr  # cvr-le-ctr | ctr-le-cvr | off
    restriction_weight = 1.0
    patience = 5
    optimizer = adam          # adam | sgd
    keep = best               # best: restore best-validation epoch | last

    [run]
    seed = 0
    seeds =                   # optional list for bench, e.g. 1,2,3
    out_dir = out
    swap_sample = 500
    impact_sample = 300
    reference_position = 1
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .models import MODEL_KINDS, ModelConfig
from .rng import RngState
from .simlog import GenConfig, label_weights
from .training import TrainConfig

__all__ = ["RunConfig", "load_config"]

OUT_DIR_ENV = "PACCKIT_OUT"


@dataclass
class DataSection:
    num_queries: int = 2000
    items_per_query: int = 10
    feature_dim: int = 8
    exam_exponent: float = 1.0
    policy_noise: float = 1.0
    p_max: int | None = None
    ctr_base: float = 0.05
    ctr_logit_std: float = 1.25
    cvr_base: float = 0.1
    cvr_logit_std: float = 1.0
    split: tuple = (0.7, 0.1, 0.2)


@dataclass
class ModelSection:
    kind: str = "pacc"
    d_emb: int = 32
    d_tower: int = 32
    d_info: int = 32
    d_att: int = 16
    dropout: float = 0.2
    attention: str = "dot"


@dataclass
class RunSection:
    seed: int = 0
    seeds: tuple = ()
    out_dir: str = "out"
    swap_sample: int = 500
    impact_sample: int = 300
    reference_position: int = 1


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    run: RunSection = field(default_factory=RunSection)

    @property
    def p_max(self) -> int:
        return self.data.p_max if self.data.p_max is not None else self.data.items_per_query

    def gen_config(self, seed: int | None = None) -> GenConfig:
        """Materialize the generator config; the ground-truth label weights
        are drawn from a dedicated substream of the seed."""
        s = self.run.seed if seed is None else seed
        wgen = RngState(s).substream("true-weights").generator()
        w_ctr = label_weights(self.data.feature_dim, wgen,
                              self.data.ctr_logit_std, self.data.ctr_base)
        w_cvr = label_weights(self.data.feature_dim, wgen,
                              self.data.cvr_logit_std, self.data.cvr_base)
        return GenConfig(
            num_queries=self.data.num_queries,
            items_per_query=self.data.items_per_query,
            feature_dim=self.data.feature_dim,
            exam_exponent=self.data.exam_exponent,
            w_ctr=w_ctr,
            w_cvr=w_cvr,
            policy_noise=self.data.policy_noise,
            seed=s,
            p_max=self.p_max,
        )

    def model_config(self) -> ModelConfig:
        m = self.model
        return ModelConfig(
            feature_dim=self.data.feature_dim,
            p_max=self.p_max,
            d_emb=m.d_emb,
            d_tower=m.d_tower,
            d_info=m.d_info,
            d_att=m.d_att,
            dropout=m.dropout,
            attention=m.attention,
        )

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return replace(self.train, seed=self.run.seed if seed is None else seed)

    def bench_seeds(self) -> tuple:
        return self.run.seeds if self.run.seeds else (self.run.seed,)


def _parse_int(raw: str) -> int:
    return int(raw)


def _parse_float(raw: str) -> float:
    v = float(raw)
    if np.isnan(v):
        raise ValueError("nan is not a valid value")
    return v


def _parse_str(raw: str) -> str:
    return raw


def _parse_float_tuple(raw: str) -> tuple:
    return tuple(float(x) for x in raw.split(",") if x.strip() != "")


def _parse_int_tuple(raw: str) -> tuple:
    return tuple(int(x) for x in raw.split(",") if x.strip() != "")


def _parse_optional_int(raw: str) -> int | None:
    return None if raw.strip() == "" else int(raw)


def _parse_optional_float(raw: str) -> float | None:
    return None if raw.strip() == "" else _parse_float(raw)


_SCHEMA = {
    "data": {
        "num_queries": _parse_int,
        "items_per_query": _parse_int,
        "feature_dim": _parse_int,
        "exam_exponent": _parse_float,
        "policy_noise": _parse_float,
        "p_max": _parse_optional_int,
        "ctr_base": _parse_float,
        "ctr_logit_std": _parse_float,
        "cvr_base": _parse_float,
        "cvr_logit_std": _parse_float,
        "split": _parse_float_tuple,
    },
    "model": {
        "kind": _parse_str,
        "d_emb": _parse_int,
        "d_tower": _parse_int,
        "d_info": _parse_int,
        "d_att": _parse_int,
        "dropout": _parse_float,
        "attention": _parse_str,
    },
    "train": {
        "epochs": _parse_int,
        "batch_size": _parse_int,
        "learning_rate": _parse_float,
        "dropout_rate": _parse_optional_float,
        "restriction": _parse_str,
        "restriction_weight": _parse_float,
        "patience": _parse_int,
        "optimizer": _parse_str,
        "keep": _parse_str,
    },
    "run": {
        "seed": _parse_int,
        "seeds": _parse_int_tuple,
        "out_dir": _parse_str,
        "swap_sample": _parse_int,
        "impact_sample": _parse_int,
        "reference_position": _parse_int,
    },
}

_SECTIONS = {"data": DataSection, "model": ModelSection, "run": RunSection}


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a config file, applying CLI/env overrides.

    ``overrides`` maps (section, key) to already-typed values, e.g.
    {("run", "seed"): 7}. All problems (unknown sections, unknown keys,
    unparsable or out-of-range values) are collected into one ConfigError.
    """
    values: dict = {section: {} for section in _SCHEMA}
    problems: list[str] = []

    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        for section in parser.sections():
            if section not in _SCHEMA:
                problems.append(f"unknown section [{section}]")
                continue
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    problems.append(f"unknown key {section}.{key}")
                    continue
                try:
                    values[section][key] = _SCHEMA[section][key](raw)
                except ValueError as exc:
                    problems.append(f"bad value for {section}.{key}: {raw!r} ({exc})")

    env_out = os.environ.get(OUT_DIR_ENV)
    if env_out:
        values["run"]["out_dir"] = env_out

    for (section, key), val in (overrides or {}).items():
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            problems.append(f"unknown override {section}.{key}")
            continue
        if val is not None:
            values[section][key] = val

    if problems:
        raise ConfigError(problems)

    try:
        cfg = RunConfig(
            data=DataSection(**values["data"]),
            model=ModelSection(**values["model"]),
            train=TrainConfig(**values["train"]),
            run=RunSection(**values["run"]),
        )
    except ConfigError:
        raise
    # Cross-field checks beyond what the dataclasses enforce.
    problems = []
    if cfg.model.kind not in MODEL_KINDS:
        problems.append(f"model.kind must be one of {MODEL_KINDS}, got {cfg.model.kind!r}")
    if len(cfg.data.split) != 3 or abs(sum(cfg.data.split) - 1.0) > 1e-9:
        problems.append(f"data.split must be 3 fractions summing to 1, got {cfg.data.split}")
    if cfg.p_max < cfg.data.items_per_query:
        problems.append(
            f"data.p_max ({cfg.data.p_max}) must be >= items_per_query ({cfg.data.items_per_query})"
        )
    if cfg.run.reference_position < 1 or cfg.run.reference_position > cfg.p_max:
        problems.append(
            f"run.reference_position must lie in 1..{cfg.p_max}, got {cfg.run.reference_position}"
        )
    if problems:
        raise ConfigError(problems)
    # Instantiating these validates the numeric ranges they own.
    cfg.model_config()
    return cfg
