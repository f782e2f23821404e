"""Position-swap counterfactual analysis.

Moving an item to the reference position (1 by default) and comparing the
prediction against the logged position reveals how much position leaks into
a model's output. A position-bias-free feature model changes only through
its explicit examination factor; a naive model does not change at all; a
position-as-feature model changes in item-specific, uncontrolled ways.

Outputs mirror three views: a scatter of original-vs-swapped log odds per
task (points of an unbiased model hug y = x), per-position mean prediction
ratios, and a scalar bias score (mean absolute log-odds displacement).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError
from .models import PaccModel, _ModelBase, counterfactual_forward
from .nn import EPS
from .rng import RngState
from .simlog import LogTable

__all__ = [
    "SwapPoint",
    "SwapImpact",
    "log_odds",
    "swap_study",
    "bias_score",
    "swap_impact_curve",
    "emit_figures",
]


def log_odds(p, eps: float = EPS) -> np.ndarray:
    """ln(p / (1-p)) with the same probability clamp the models use, so
    extreme predictions stay finite."""
    q = np.clip(np.asarray(p, dtype=np.float64), eps, 1.0 - eps)
    return np.log(q / (1.0 - q))


@dataclass
class SwapPoint:
    item_id: int
    position: int
    task: str
    p_orig: float
    p_swap: float
    lo_orig: float
    lo_swap: float


@dataclass
class SwapImpact:
    position: int
    ratio_ctr: float
    ratio_cvr: float
    ratio_seen: float | None
    n: int


def swap_study(model: _ModelBase, table: LogTable, sample_n: int = 500,
               seed: int = 0, reference: int = 1) -> list[SwapPoint]:
    """Counterfactually move a uniform sample of records to the reference
    position; emit one point per (record, task) with both probabilities and
    their log odds."""
    if sample_n > len(table):
        raise DomainError(f"sample_n {sample_n} exceeds dataset size {len(table)}")
    gen = RngState(seed).substream("swap-sample").generator()
    idx = gen.choice(len(table), size=sample_n, replace=False)
    sub = table.select(idx)
    at_logged, at_ref = counterfactual_forward(model, sub.features, sub.position, reference)

    points = []
    for i in range(sample_n):
        for task, orig, swap in (
            ("ctr", at_logged.p_ctr[i], at_ref.p_ctr[i]),
            ("cvr", at_logged.p_cvr[i], at_ref.p_cvr[i]),
        ):
            points.append(SwapPoint(
                item_id=int(sub.item_id[i]),
                position=int(sub.position[i]),
                task=task,
                p_orig=float(orig),
                p_swap=float(swap),
                lo_orig=float(log_odds(orig)),
                lo_swap=float(log_odds(swap)),
            ))
    return points


def bias_score(points: list[SwapPoint]) -> float:
    """Mean |log-odds displacement| over the swap points; 0 means the
    predictions are position-invariant."""
    if not points:
        raise DomainError("bias_score needs at least one swap point")
    return float(np.mean([abs(pt.lo_orig - pt.lo_swap) for pt in points]))


def swap_impact_curve(model: _ModelBase, table: LogTable, reference: int = 1
                      ) -> list[SwapImpact]:
    """Per logged position: mean ratio prediction-at-reference over
    prediction-at-logged, for both tasks.

    For the factorized model the examination ratio P(s|ref)/P(s|p) is
    reported too; it is item-independent, which is exactly why that model's
    swap impact is a single curve rather than a cloud. Positions without
    records are omitted; at the reference position every ratio is exactly 1.
    """
    at_logged, at_ref = counterfactual_forward(model, table.features, table.position, reference)
    ratio_ctr = at_ref.p_ctr / at_logged.p_ctr
    ratio_cvr = at_ref.p_cvr / at_logged.p_cvr
    seen_ratio = None
    if isinstance(model, PaccModel):
        probs = model.propensity_table().probabilities
        seen_ratio = probs[reference - 1] / probs

    out = []
    for p in np.unique(table.position):
        mask = table.position == p
        out.append(SwapImpact(
            position=int(p),
            ratio_ctr=float(ratio_ctr[mask].mean()),
            ratio_cvr=float(ratio_cvr[mask].mean()),
            ratio_seen=None if seen_ratio is None else float(seen_ratio[p - 1]),
            n=int(mask.sum()),
        ))
    return out


def _write_scatter_csv(points: list[SwapPoint], task: str, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("item_id,position,task,p_orig,p_swap,lo_orig,lo_swap\n")
        for pt in points:
            if pt.task != task:
                continue
            fh.write(
                f"{pt.item_id},{pt.position},{pt.task},{pt.p_orig!r},{pt.p_swap!r},"
                f"{pt.lo_orig!r},{pt.lo_swap!r}\n"
            )


def _write_impact_csv(curves: list[SwapImpact], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("position,ratio_ctr,ratio_cvr,ratio_seen,n\n")
        for c in curves:
            seen = "" if c.ratio_seen is None else repr(c.ratio_seen)
            fh.write(f"{c.position},{c.ratio_ctr!r},{c.ratio_cvr!r},{seen},{c.n}\n")


def emit_figures(points: list[SwapPoint], curves: list[SwapImpact], out_dir) -> list[Path]:
    """Write scatter/impact CSVs and the matching SVG figures.

    Output bytes are deterministic for identical inputs: point order is
    preserved, float formatting is repr, and the SVG hash salt and date
    metadata are pinned.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "pacckit"

    for task in ("ctr", "cvr"):
        csv_path = out_dir / f"swap_scatter_{task}.csv"
        _write_scatter_csv(points, task, csv_path)
        written.append(csv_path)

        xs = [pt.lo_swap for pt in points if pt.task == task]
        ys = [pt.lo_orig for pt in points if pt.task == task]
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        if xs:
            lo = min(min(xs), min(ys))
            hi = max(max(xs), max(ys))
            pad = 0.05 * (hi - lo) if hi > lo else 1.0
            guide = (lo - pad, hi + pad)
            ax.plot(guide, guide, color="0.6", linewidth=1.0, zorder=1)
            ax.scatter(xs, ys, s=8, alpha=0.6, zorder=2)
        ax.set_xlabel(f"log odds of {task} at reference position")
        ax.set_ylabel(f"log odds of {task} at original position")
        fig.tight_layout()
        svg_path = out_dir / f"swap_scatter_{task}.svg"
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(svg_path)

    impact_csv = out_dir / "swap_impact.csv"
    _write_impact_csv(curves, impact_csv)
    written.append(impact_csv)

    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    positions = [c.position for c in curves]
    ax.plot(positions, [c.ratio_ctr for c in curves], marker="o", label="click ratio")
    ax.plot(positions, [c.ratio_cvr for c in curves], marker="x", label="conversion ratio")
    if curves and curves[0].ratio_seen is not None:
        ax.plot(positions, [c.ratio_seen for c in curves], marker="s",
                label="examination ratio")
    ax.axhline(1.0, color="0.6", linewidth=1.0)
    ax.set_xlabel("logged position")
    ax.set_ylabel("prediction at reference / prediction at logged")
    ax.legend()
    fig.tight_layout()
    impact_svg = out_dir / "swap_impact.svg"
    fig.savefig(impact_svg, format="svg", metadata={"Date": None})
    plt.close(fig)
    written.append(impact_svg)

    return written
