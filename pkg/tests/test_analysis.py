import math

import numpy as np
import pytest

from pacckit.analysis import (
    SwapImpact,
    SwapPoint,
    bias_score,
    emit_figures,
    log_odds,
    swap_impact_curve,
    swap_study,
)
from pacckit.errors import DomainError
from pacckit.models import make_model
from pacckit.nn import EPS
from pacckit.rng import RngState
from pacckit.simlog import LogTable

from conftest import tiny_config


def make_table(cfg, n=60, seed=3):
    gen = RngState(seed).substream("t").generator()
    positions = (np.arange(n) % cfg.p_max) + 1
    click = (gen.random(n) < 0.3).astype(int)
    conv = (click * (gen.random(n) < 0.3)).astype(int)
    return LogTable(
        np.repeat(np.arange(n // cfg.p_max), cfg.p_max),
        np.arange(n),
        positions,
        click,
        conv,
        gen.standard_normal((n, cfg.feature_dim)),
    )


class TestLogOdds:
    def test_definition(self):
        assert np.isclose(log_odds(0.5), 0.0)
        assert np.isclose(log_odds(0.75), math.log(3.0), atol=1e-12)

    def test_clamped_finite(self):
        assert np.isfinite(log_odds(0.0))
        assert np.isfinite(log_odds(1.0))
        assert log_odds(0.0) == math.log(EPS / (1.0 - EPS))


class TestSwapStudy:
    def test_naive_points_on_diagonal(self):
        cfg = tiny_config()
        model = make_model("naive", cfg, RngState(4))
        table = make_table(cfg)
        points = swap_study(model, table, sample_n=30, seed=0)
        assert len(points) == 60  # both tasks per record
        for pt in points:
            assert pt.p_orig == pt.p_swap
            assert pt.lo_orig == pt.lo_swap
        assert bias_score(points) == 0.0

    def test_records_at_reference_position_on_diagonal(self):
        cfg = tiny_config()
        model = make_model("posfeat", cfg, RngState(4))
        table = make_table(cfg)
        keep = np.flatnonzero(table.position == 1)
        sub = table.select(keep)
        points = swap_study(model, sub, sample_n=len(sub), seed=0)
        for pt in points:
            assert pt.p_orig == pt.p_swap

    def test_pacc_ctr_offset_is_position_pure(self):
        cfg = tiny_config()
        model = make_model("pacc", cfg, RngState(4))
        table = make_table(cfg, n=120)
        points = [p for p in swap_study(model, table, sample_n=100, seed=1)
                  if p.task == "ctr"]
        ratios = {}
        for pt in points:
            ratios.setdefault(pt.position, []).append(pt.p_orig / pt.p_swap)
        for pos, rs in ratios.items():
            assert max(rs) - min(rs) < 1e-10

    def test_sample_too_large(self):
        cfg = tiny_config()
        model = make_model("naive", cfg, RngState(4))
        table = make_table(cfg, n=12)
        with pytest.raises(DomainError):
            swap_study(model, table, sample_n=13)

    def test_deterministic_sampling(self):
        cfg = tiny_config()
        model = make_model("posfeat", cfg, RngState(4))
        table = make_table(cfg)
        a = swap_study(model, table, sample_n=20, seed=9)
        b = swap_study(model, table, sample_n=20, seed=9)
        assert a == b


class TestBiasScore:
    def test_doubled_odds_gives_log_two(self):
        points = [
            SwapPoint(item_id=i, position=2, task="ctr", p_orig=0.1, p_swap=0.1,
                      lo_orig=1.0, lo_swap=1.0 + math.log(2.0))
            for i in range(10)
        ]
        assert np.isclose(bias_score(points), math.log(2.0), atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            bias_score([])


class TestImpactCurve:
    def test_reference_row_is_exactly_one(self):
        cfg = tiny_config()
        model = make_model("posfeat", cfg, RngState(4))
        table = make_table(cfg)
        curves = swap_impact_curve(model, table)
        row = next(c for c in curves if c.position == 1)
        assert row.ratio_ctr == 1.0 and row.ratio_cvr == 1.0

    def test_pacc_ctr_ratio_equals_examination_ratio(self):
        cfg = tiny_config()
        model = make_model("pacc", cfg, RngState(4))
        table = make_table(cfg, n=120)
        curves = swap_impact_curve(model, table)
        for c in curves:
            assert c.ratio_seen is not None
            assert np.isclose(c.ratio_ctr, c.ratio_seen, rtol=1e-10)

    def test_missing_positions_omitted(self):
        cfg = tiny_config()
        model = make_model("naive", cfg, RngState(4))
        table = make_table(cfg, n=60)
        sub = table.select(np.flatnonzero(table.position != 3))
        curves = swap_impact_curve(model, sub)
        assert sorted(c.position for c in curves) == [1, 2, 4, 5, 6]

    def test_counts(self):
        cfg = tiny_config()
        model = make_model("naive", cfg, RngState(4))
        table = make_table(cfg, n=60)
        curves = swap_impact_curve(model, table)
        assert all(c.n == 10 for c in curves)


class TestEmitFigures:
    def _outputs(self, tmp_path, cfg=None, seed=2):
        cfg = cfg or tiny_config()
        model = make_model("pacc", cfg, RngState(seed))
        table = make_table(cfg)
        points = swap_study(model, table, sample_n=30, seed=0)
        curves = swap_impact_curve(model, table)
        return emit_figures(points, curves, tmp_path)

    def test_expected_files(self, tmp_path):
        written = self._outputs(tmp_path)
        names = {p.name for p in written}
        assert names == {
            "swap_scatter_ctr.csv", "swap_scatter_ctr.svg",
            "swap_scatter_cvr.csv", "swap_scatter_cvr.svg",
            "swap_impact.csv", "swap_impact.svg",
        }

    def test_csv_schemas(self, tmp_path):
        self._outputs(tmp_path)
        scatter = (tmp_path / "swap_scatter_ctr.csv").read_text().splitlines()
        assert scatter[0] == "item_id,position,task,p_orig,p_swap,lo_orig,lo_swap"
        assert len(scatter) == 31
        impact = (tmp_path / "swap_impact.csv").read_text().splitlines()
        assert impact[0] == "position,ratio_ctr,ratio_cvr,ratio_seen,n"

    def test_deterministic_bytes(self, tmp_path):
        a_dir = tmp_path / "a"
        b_dir = tmp_path / "b"
        for d in (a_dir, b_dir):
            self._outputs(d)
        for name in ("swap_scatter_ctr.csv", "swap_scatter_cvr.csv",
                     "swap_impact.csv", "swap_scatter_ctr.svg", "swap_impact.svg"):
            assert (a_dir / name).read_bytes() == (b_dir / name).read_bytes()

    def test_ratio_seen_blank_for_position_blind(self, tmp_path):
        cfg = tiny_config()
        model = make_model("naive", cfg, RngState(2))
        table = make_table(cfg)
        points = swap_study(model, table, sample_n=10, seed=0)
        curves = swap_impact_curve(model, table)
        emit_figures(points, curves, tmp_path)
        row = (tmp_path / "swap_impact.csv").read_text().splitlines()[1]
        assert row.split(",")[3] == ""
