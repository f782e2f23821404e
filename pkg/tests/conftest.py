import numpy as np
import pytest

from pacckit.models import ModelConfig, make_model
from pacckit.rng import RngState
from pacckit.training import loss_grads, total_loss

# Small dimensions keep finite-difference sweeps fast while exercising the
# full graph topology.
TINY = dict(feature_dim=5, p_max=6, d_emb=8, d_tower=8, d_info=8, d_att=4, dropout=0.0)


def tiny_config(**overrides) -> ModelConfig:
    return ModelConfig(**{**TINY, **overrides})


def gradcheck_instance(kind: str, seed: int, batch: int = 8):
    """A well-conditioned instance for central-difference gradient checks.

    Central differences need the loss locally smooth and every nonzero
    gradient above the float-noise floor, so the batch uses dense
    deterministic labels and the attention scores are scaled up out of their
    near-uniform regime. Callers should verify conditioning via
    ``min_nonzero_grad`` / ``min_relu_preactivation`` before asserting.
    """
    cfg = tiny_config()
    gen = RngState(seed).substream("data").generator()
    features = gen.standard_normal((batch, cfg.feature_dim))
    positions = (np.arange(batch) % cfg.p_max) + 1
    y_ctr = (np.arange(batch) % 2).astype(float)
    y_cvr = (y_ctr * (np.arange(batch) % 4 < 2)).astype(float)
    model = make_model(kind, cfg, RngState(seed + 1000))
    for unit_name in ("cvr_attention", "ctr_attention"):
        unit = getattr(model, unit_name, None)
        if unit is not None and hasattr(unit, "query_proj"):
            unit.query_proj.weight *= 3.0
            unit.key_proj.weight *= 3.0

    def loss_fn():
        pred = model.forward(features, positions, training=True)
        return total_loss(pred, y_ctr, y_cvr)[0]

    def run_backward():
        model.zero_grad()
        pred = model.forward(features, positions, training=True)
        g_ctr, g_cvr = loss_grads(pred, y_ctr, y_cvr)
        model.backward(g_ctr, g_cvr)

    return model, loss_fn, run_backward


def min_nonzero_grad(model) -> float:
    grads = np.concatenate([np.abs(p.grad).ravel() for p in model.params()])
    nonzero = grads[grads > 0]
    return float(nonzero.min()) if len(nonzero) else np.inf


def min_relu_preactivation(model) -> float:
    mins = []
    for name in ("ctr_tower", "cvr_tower", "pos_tower",
                 "info_ctr_proj", "info_pos_proj"):
        tower = getattr(model, name, None)
        if tower is None:
            continue
        for z in tower._pre:
            mins.append(float(np.abs(z).min()))
    return min(mins)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
