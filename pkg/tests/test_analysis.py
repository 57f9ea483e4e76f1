"""Complexity analyzer: closed forms, measured counts, parameter bands."""

import numpy as np
import pytest

from wavemix import analysis, mixers
from wavemix.counting import FLOPS_PER_MULTADD
from wavemix.errors import ConfigError
from wavemix.model import ModelConfig, VitModel


class TestClosedForms:
    def test_sa_params_pinned_value(self):
        assert analysis.table1_params("sa", 64, 384) == 442368.0
        assert analysis.table1_params("sa", 4096, 384) == 442368.0  # n-free

    def test_gfn_params_scale_with_tokens(self):
        assert analysis.table1_params("gfn", 64, 384) == 24576.0
        assert analysis.table1_params("gfn", 128, 384) == 49152.0

    def test_mwa_flops_pinned_and_linear(self):
        assert analysis.table1_flops("mwa", 64, 8) == 24576.0
        for n in (16, 64, 256):
            one = analysis.table1_flops("mwa", n, 32, g1=2, g2=4)
            two = analysis.table1_flops("mwa", 2 * n, 32, g1=2, g2=4)
            assert two == 2 * one

    def test_sa_flops_superlinear(self):
        one = analysis.table1_flops("sa", 64, 32)
        two = analysis.table1_flops("sa", 128, 32)
        assert two > 2 * one
        assert one == 64 * 64 * 32 + 3 * 64 * 32 * 32

    def test_log_is_base_two(self):
        # n d + n d log2(n) at n=64, d=1: 64 + 64*6.
        assert analysis.table1_flops("gfn", 64, 1) == 448.0
        assert analysis.table1_flops("gfn", 1, 1) == 1.0  # log term vanishes

    def test_afno_forms(self):
        d, n, k = 384, 64, 4
        assert analysis.table1_params("afno", n, d, afno_k=k) == (1 + 4 / k) * d * d + 4 * d
        assert analysis.table1_flops("afno", n, d, afno_k=k) == pytest.approx(
            n * d * d / k + n * d * np.log2(n))

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            analysis.table1_flops("mlp", 64, 8)
        with pytest.raises(ConfigError):
            analysis.table1_params("mlp", 64, 8)


class TestCountedParams:
    def test_mwa_default_knobs_per_layer(self):
        cfg = ModelConfig(mixer="mwa", image_size=32, patch_size=4, dim=384,
                          depth=1, classes=100, dtype="float32")
        split = analysis.count_params(VitModel(cfg))
        assert split.mixer == 2801664  # 19 d^2: two 3x3 dense convs plus a 1x1
        assert split.total == split.mixer + split.other

    def test_breakdown_matches_traversal(self):
        cfg = ModelConfig(mixer="sa", image_size=8, patch_size=2, dim=8,
                          depth=2, classes=5, mlp_ratio=2, heads=2)
        m = VitModel(cfg)
        split = analysis.count_params(m)
        assert split.total == m.n_params
        assert split.mixer == 2 * 4 * 8 * 8


class TestParameterBands:
    def test_vits4_totals_exact_and_in_band(self):
        expect = {
            "mwa": (16547044, 16.0e6, 17.0e6),
            "sa": (21357796, 21.0e6, 21.0e6),
            "gfn": (14648548, 15.0e6, 15.0e6),
        }
        for kind, (exact, lo_band, hi_band) in expect.items():
            cfg = analysis.vits4_config(kind, dtype="float32")
            total = analysis.count_params(VitModel(cfg)).total
            assert total == exact, kind
            assert 0.9 * lo_band <= total <= 1.1 * hi_band, kind

    def test_vits4_config_shape(self):
        cfg = analysis.vits4_config("mwa")
        assert (cfg.dim, cfg.depth, cfg.patch_size, cfg.classes) == (384, 12, 4, 100)
        assert (cfg.k_w, cfg.g_w, cfg.g1, cfg.g2) == (3, 12, 4, 32)


class TestMeasuredMultadds:
    def test_flops_convention_factor(self):
        cfg = ModelConfig(mixer="mwa", image_size=8, patch_size=2, dim=8,
                          depth=1, classes=5, mlp_ratio=2)
        m = VitModel(cfg)
        assert analysis.count_flops(m) == FLOPS_PER_MULTADD * analysis.count_model_multadds(m)

    def test_gfn_ratio_near_n_log_n(self):
        p8 = mixers.GfnParams(8, 8, 8, rng=np.random.default_rng(0))
        p16 = mixers.GfnParams(8, 8, 16, rng=np.random.default_rng(0))
        base = analysis.count_mixer_multadds(p8, 8, 8, 8)
        double = analysis.count_mixer_multadds(p16, 8, 8, 16)
        assert 2 < double / base <= 2.6


class TestCostReport:
    def test_rows_in_table_order_with_interpretations(self):
        rep = analysis.mixer_cost_report(64, 8)
        assert [r.mixer for r in rep.rows] == list(analysis.TABLE1_ROWS)
        assert rep.row("mwa").interpretation == "Multi Scale Conv"
        assert rep.row("sa").interpretation == "Graph Global Conv"

    def test_formula_and_measured_never_reconciled(self):
        rep = analysis.mixer_cost_report(64, 8)
        afno = rep.row("afno")
        assert afno.params_measured is None and afno.flops_measured is None
        assert not afno.diverges
        for kind in ("sa", "gfn", "mwa"):
            row = rep.row(kind)
            assert row.params_measured is not None
            assert row.diverges  # as-built counts differ from the closed forms
            assert row.params_table1 == analysis.table1_params(kind, 64, 8)

    def test_measured_params_match_builders(self):
        rep = analysis.mixer_cost_report(64, 8, heads=2)
        assert rep.row("sa").params_measured == 4 * 8 * 8
        assert rep.row("gfn").params_measured == 2 * 8 * 8 * 5
        assert rep.row("mwa").params_measured == 19 * 8 * 8

    def test_non_square_token_count_rejected(self):
        with pytest.raises(ConfigError, match="square"):
            analysis.mixer_cost_report(48, 8)

    def test_unknown_row_lookup(self):
        rep = analysis.mixer_cost_report(16, 4, heads=2)
        with pytest.raises(ConfigError):
            rep.row("mlp")
