"""Command-line pipelines: simulate | train | eval | swap | bench.

Every command is driven by a config file (see ``config``) plus a handful of
flag overrides, and is deterministic given the config seed: re-running with
the same inputs reproduces byte-identical CSV outputs and never mutates its
input files.

Exit codes: 0 success, 1 usage error, 2 runtime error (one-line diagnostic
on stderr).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import analysis, metrics, simlog, training
from .config import RunConfig, load_config
from .errors import ConfigError
from .models import MODEL_KINDS

__all__ = ["main", "cmd_simulate", "cmd_train", "cmd_eval", "cmd_swap", "cmd_bench"]

_METRIC_COLS = ("weighted_mrr", "mrr", "pauc", "auc")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage by default; the contract here is 1.
    def error(self, message):
        raise _UsageError(message)


def _write_logs_dir(cfg: RunConfig, out_dir: Path, seed: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    table, theta = simlog.generate_logs(cfg.gen_config(seed))
    train_t, val_t, test_t = simlog.split_dataset(table, cfg.data.split, seed)
    simlog.write_logs(train_t, out_dir / "train.csv")
    simlog.write_logs(val_t, out_dir / "val.csv")
    simlog.write_logs(test_t, out_dir / "test.csv")
    simlog.write_propensity(theta, out_dir / "propensity.csv")


def cmd_simulate(config_path, out_path, seed: int | None = None) -> int:
    cfg = load_config(config_path, {("run", "seed"): seed})
    out_dir = Path(out_path)
    _write_logs_dir(cfg, out_dir, cfg.run.seed)
    print(f"wrote train/val/test logs and propensity sidecar to {out_dir}")
    return 0


def _train_one(cfg: RunConfig, data_dir: Path, kind: str, seed: int,
               checkpoint_path: Path) -> training.TrainReport:
    train_t = simlog.read_logs(data_dir / "train.csv")
    val_t = simlog.read_logs(data_dir / "val.csv")
    model, report = training.train(
        kind, train_t, val_t, cfg.train_config(seed), cfg.model_config()
    )
    checkpoint_path.parent.mkdir(parents=True, exist_ok=True)
    training.save_checkpoint(model, checkpoint_path)
    report.checkpoint_path = str(checkpoint_path)
    report_path = checkpoint_path.with_suffix(".report.csv")
    report.write_csv(report_path)
    return report


def cmd_train(config_path, data_path, model_kind, out_checkpoint,
              seed: int | None = None) -> int:
    overrides = {("run", "seed"): seed}
    if model_kind is not None:
        overrides[("model", "kind")] = model_kind
    cfg = load_config(config_path, overrides)
    checkpoint = Path(out_checkpoint)
    report = _train_one(cfg, Path(data_path), cfg.model.kind, cfg.run.seed, checkpoint)
    last = report.epochs[-1] if report.epochs else None
    tail = (
        f"best epoch {report.best_epoch}, val AUC ctr={last.val_auc_ctr:.4f} "
        f"cvr={last.val_auc_cvr:.4f}" if last else "0 epochs (untrained snapshot)"
    )
    print(f"trained {cfg.model.kind}: {tail}; checkpoint {checkpoint}")
    return 0


def _metrics_csv_rows(report: metrics.MetricsReport, model_name: str) -> str:
    lines = ["model,task,metric,value"]
    for model_name_, task, metric, value in report.rows(model_name):
        lines.append(f"{model_name_},{task},{metric},{value!r}")
    return "\n".join(lines) + "\n"


def cmd_eval(checkpoint_path, data_path, out_path) -> int:
    model = training.load_checkpoint(checkpoint_path)
    table = simlog.read_logs(data_path)
    report = metrics.evaluate(model, table)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(_metrics_csv_rows(report, model.kind))
    print(report.format_table(model.kind))
    print(f"wrote {out_path}")
    return 0


def cmd_swap(checkpoint_path, data_path, out_dir, sample_n: int = 500,
             seed: int = 0, reference: int = 1) -> int:
    model = training.load_checkpoint(checkpoint_path)
    table = simlog.read_logs(data_path)
    n = min(sample_n, len(table))
    points = analysis.swap_study(model, table, sample_n=n, seed=seed, reference=reference)
    curves = analysis.swap_impact_curve(model, table, reference=reference)
    written = analysis.emit_figures(points, curves, out_dir)
    score = analysis.bias_score(points)
    print(f"bias score ({model.kind}): {score:.6f}")
    for path in written:
        print(f"wrote {path}")
    return 0


def _comparison_csv(rows: dict[str, metrics.MetricsReport]) -> str:
    header = "model," + ",".join(
        f"{task}_{m}" for task in metrics.TASKS for m in _METRIC_COLS
    )
    lines = [header]
    for kind in MODEL_KINDS:
        if kind not in rows:
            continue
        rep = rows[kind]
        cells = []
        for task in metrics.TASKS:
            tm = getattr(rep, task)
            cells += [repr(getattr(tm, m)) for m in _METRIC_COLS]
        lines.append(f"{kind}," + ",".join(cells))
    return "\n".join(lines) + "\n"


def _comparison_table(rows: dict[str, metrics.MetricsReport]) -> str:
    short = {"weighted_mrr": "wmrr", "mrr": "mrr", "pauc": "pauc", "auc": "auc"}
    head = f"{'model':<9}" + "".join(
        f" {task + '_' + short[m]:>9}" for task in metrics.TASKS for m in _METRIC_COLS
    )
    lines = [head]
    for kind in MODEL_KINDS:
        if kind not in rows:
            continue
        rep = rows[kind]
        cells = []
        for task in metrics.TASKS:
            tm = getattr(rep, task)
            cells += [f"{getattr(tm, m):>9.4f}" for m in _METRIC_COLS]
        lines.append(f"{kind:<9}" + " ".join([""] + cells))
    return "\n".join(lines)


def cmd_bench(config_path, out_dir=None, seed: int | None = None,
              seeds: tuple | None = None) -> int:
    """Full pipeline: simulate, train all four model kinds on the shared
    data, evaluate each on the held-out test split, write the comparison
    grid (and its seed mean when several seeds are requested)."""
    overrides = {("run", "seed"): seed}
    if seeds:
        overrides[("run", "seeds")] = tuple(seeds)
    cfg = load_config(config_path, overrides)
    base = Path(out_dir) if out_dir is not None else Path(cfg.run.out_dir)
    seed_list = cfg.bench_seeds()

    all_reports: list[dict[str, metrics.MetricsReport]] = []
    for s in seed_list:
        seed_dir = base / f"seed_{s}"
        data_dir = seed_dir / "data"
        _write_logs_dir(cfg, data_dir, s)
        test_t = simlog.read_logs(data_dir / "test.csv")

        reports: dict[str, metrics.MetricsReport] = {}
        for kind in MODEL_KINDS:
            ckpt = seed_dir / f"{kind}.npz"
            _train_one(cfg, data_dir, kind, s, ckpt)
            model = training.load_checkpoint(ckpt)
            reports[kind] = metrics.evaluate(model, test_t)
        (seed_dir / "comparison.csv").write_text(_comparison_csv(reports))
        all_reports.append(reports)
        print(f"seed {s}:")
        print(_comparison_table(reports))

    if len(seed_list) > 1:
        mean_rows = {}
        for kind in MODEL_KINDS:
            per_task = {}
            for task in metrics.TASKS:
                vals = {
                    m: sum(getattr(getattr(r[kind], task), m) for r in all_reports) / len(all_reports)
                    for m in _METRIC_COLS
                }
                per_task[task] = metrics.TaskMetrics(
                    auc=vals["auc"], pauc=vals["pauc"], mrr=vals["mrr"],
                    weighted_mrr=vals["weighted_mrr"],
                )
            mean_rows[kind] = metrics.MetricsReport(
                ctr=per_task["ctr"], cvr=per_task["cvr"],
                n_queries=0, n_click_pos=0, n_conv_pos=0, n_weight_clamped=0,
            )
        (base / "comparison_mean.csv").write_text(_comparison_csv(mean_rows))
        print(f"seed mean over {len(seed_list)} seeds:")
        print(_comparison_table(mean_rows))
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="pacckit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic logs + propensity sidecar")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="output directory for the split log files")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("train", help="train one model on simulated logs")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True, help="directory holding train.csv and val.csv")
    p.add_argument("--model", choices=MODEL_KINDS, default=None)
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("eval", help="metrics for a checkpoint on a test log")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="test log csv")
    p.add_argument("--out", required=True, help="metrics csv path")

    p = sub.add_parser("swap", help="position-swap study csvs + figures")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="test log csv")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reference", type=int, default=1)

    p = sub.add_parser("bench", help="simulate + train all models + comparison grid")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None, help="output directory (default: config out_dir)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--seeds", default=None, help="comma-separated seed grid, e.g. 1,2,3")

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out, args.seed)
        if args.command == "train":
            return cmd_train(args.config, args.data, args.model, args.out, args.seed)
        if args.command == "eval":
            return cmd_eval(args.checkpoint, args.data, args.out)
        if args.command == "swap":
            return cmd_swap(args.checkpoint, args.data, args.out,
                            args.samples, args.seed, args.reference)
        if args.command == "bench":
            seeds = None
            if args.seeds:
                try:
                    seeds = tuple(int(x) for x in args.seeds.split(","))
                except ValueError:
                    print(f"usage error: bad --seeds value {args.seeds!r}", file=sys.stderr)
                    return 1
            return cmd_bench(args.config, args.out, args.seed, seeds)
        raise AssertionError(f"unhandled command {args.command!r}")
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
