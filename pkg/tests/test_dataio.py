import logging

import numpy as np
import pytest

from crisishedge.dataio import (
    ConversionMethod,
    MacroSeries,
    ReliabilityInputs,
    SourceKind,
    fuse_hybrid,
    load_manifest,
    load_panel,
    load_series,
    pct_change,
    reliability_score,
    save_series,
    to_monthly,
)
from crisishedge.errors import ConfigError, DataError

from conftest import make_series


class TestMacroSeries:
    def test_rejects_unsorted_stamps(self):
        with pytest.raises(ValueError, match="increasing"):
            MacroSeries("x", (("2020-02", 1.0), ("2020-01", 2.0)))

    def test_rejects_duplicate_stamps(self):
        with pytest.raises(ValueError):
            MacroSeries("x", (("2020-01", 1.0), ("2020-01", 2.0)))

    def test_rejects_mixed_precision(self):
        with pytest.raises(ValueError, match="mixes"):
            MacroSeries("x", (("2020-01", 1.0), ("2020-02-03", 2.0)))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            MacroSeries("x", (("2020-01", float("nan")),))

    def test_rejects_reliability_outside_unit_interval(self):
        with pytest.raises(ValueError):
            MacroSeries("x", (("2020-01", 1.0),), reliability=1.5)

    def test_window_is_inclusive(self):
        s = make_series("x", [1, 2, 3, 4], start="2020-01")
        w = s.window("2020-02", "2020-03")
        assert w.stamps == ("2020-02", "2020-03")
        assert list(w.values) == [2.0, 3.0]


class TestCsvRoundtrip:
    def test_values_survive_exactly(self, tmp_path):
        values = [0.1, 1 / 3, 2.0 ** -40, 123456.789]
        s = make_series("x", values)
        path = save_series(s, tmp_path / "x.csv")
        back = load_series(path, name="x")
        assert list(back.values) == values

    def test_duplicate_stamp_names_the_month(self, tmp_path):
        p = tmp_path / "dup.csv"
        p.write_text("date,value\n2020-01,1.0\n2020-01,2.0\n")
        with pytest.raises(DataError, match="2020-01"):
            load_series(p)

    def test_malformed_row_reports_line_number(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("date,value\n2020-01,1.0\nnot-a-date,2.0\n")
        with pytest.raises(DataError, match="row 3"):
            load_series(p)

    def test_empty_value_cell_rejected(self, tmp_path):
        p = tmp_path / "gap.csv"
        p.write_text("date,value\n2020-01,\n")
        with pytest.raises(DataError):
            load_series(p)

    def test_missing_column_rejected(self, tmp_path):
        p = tmp_path / "cols.csv"
        p.write_text("month,value\n2020-01,1.0\n")
        with pytest.raises(DataError, match="date"):
            load_series(p)


class TestToMonthly:
    def make_daily(self):
        obs = (
            ("2020-01-05", 10.0),
            ("2020-01-20", 20.0),
            ("2020-02-10", 40.0),
        )
        return MacroSeries("d", obs)

    def test_last(self):
        m = to_monthly(self.make_daily(), ConversionMethod.LAST)
        assert m.as_dict() == {"2020-01": 20.0, "2020-02": 40.0}

    def test_mean(self):
        m = to_monthly(self.make_daily(), ConversionMethod.MEAN)
        assert m.as_dict() == {"2020-01": 15.0, "2020-02": 40.0}

    def test_linear_interp_fills_gap_months(self):
        obs = (("2020-01-31", 10.0), ("2020-04-30", 40.0))
        m = to_monthly(MacroSeries("d", obs), "linear_interp")
        assert m.as_dict() == {
            "2020-01": 10.0, "2020-02": 20.0, "2020-03": 30.0, "2020-04": 40.0,
        }

    def test_identity_on_monthly_input(self):
        s = make_series("x", [1.0, 2.0])
        assert to_monthly(s, ConversionMethod.LAST).as_dict() == s.as_dict()


class TestReliability:
    def test_weighted_combination(self):
        inputs = ReliabilityInputs(
            timeliness=0.75, revision_volatility=0.5, crosscheck_error=0.5
        )
        assert reliability_score(inputs) == pytest.approx(0.6, abs=1e-12)

    def test_perfect_source(self):
        inputs = ReliabilityInputs(1.0, 0.0, 0.0)
        assert reliability_score(inputs) == 1.0

    def test_component_out_of_range(self):
        with pytest.raises(ValueError):
            ReliabilityInputs(1.2, 0.0, 0.0)


class TestFuseHybrid:
    def test_convex_combination(self):
        a = make_series("official", [10.0])
        p = make_series("proxy", [20.0])
        fused = fuse_hybrid(a, p, 0.6, name="hybrid")
        assert fused.as_dict() == {"2020-01": 14.0}
        assert fused.source_kind is SourceKind.HYBRID
        assert fused.reliability == 0.6

    def test_single_source_months_pass_through(self, caplog):
        a = make_series("official", [10.0, 11.0], start="2020-01")
        p = make_series("proxy", [20.0], start="2020-02")
        with caplog.at_level(logging.INFO, logger="crisishedge.dataio"):
            fused = fuse_hybrid(a, p, 0.5)
        assert fused.as_dict() == {"2020-01": 10.0, "2020-02": 15.5}
        assert any("official only" in r.message for r in caplog.records)

    def test_q_validation(self):
        a = make_series("a", [1.0])
        with pytest.raises(ValueError):
            fuse_hybrid(a, a, 1.5)

    def test_day_stamped_input_rejected(self):
        daily = MacroSeries("d", (("2020-01-05", 1.0),))
        with pytest.raises(DataError):
            fuse_hybrid(daily, daily, 0.5)


class TestPctChange:
    def test_levels_to_fractions(self):
        s = make_series("idx", [100.0, 110.0, 99.0])
        r = pct_change(s)
        assert r.values == pytest.approx([0.1, 99.0 / 110.0 - 1.0])
        assert r.unit == "fraction/month"

    def test_gap_months_propagate_as_gaps(self):
        s = MacroSeries(
            "idx", (("2020-01", 100.0), ("2020-03", 110.0), ("2020-04", 121.0))
        )
        r = pct_change(s)
        # 2020-03 has no prior month observed, so no jump is synthesized.
        assert r.stamps == ("2020-04",)
        assert r.values == pytest.approx([0.1])

    def test_rejects_non_positive_levels(self):
        s = make_series("idx", [100.0, -1.0])
        with pytest.raises(DataError):
            pct_change(s)


class TestManifest:
    def test_fixture_manifest_loads_fused_panel(self, fixture_root):
        manifest = load_manifest(fixture_root / "clayton_coupled" / "manifest.yaml")
        panel = load_panel(manifest)
        assert manifest.roles["inflation"] == "cpi_rate"
        fused = panel["cpi_rate"]
        assert fused.source_kind is SourceKind.HYBRID
        # q from the reliability block: 0.4*0.8 + 0.3*(1-0.3) + 0.3*(1-0.2)
        assert fused.reliability == pytest.approx(0.77)
        official = panel["cpi_official"].as_dict()
        proxy = panel["cpi_proxy"].as_dict()
        got = fused.as_dict()
        for m in list(got)[:5]:
            assert got[m] == pytest.approx(0.77 * official[m] + 0.23 * proxy[m])

    def test_unknown_role_reference_rejected(self, tmp_path):
        (tmp_path / "m.yaml").write_text(
            "schema_version: 1\n"
            "series: [{name: a, path: a.csv}]\n"
            "roles: {equity: a, fx: a, inflation: ghost}\n"
        )
        with pytest.raises(ConfigError, match="ghost"):
            load_manifest(tmp_path / "m.yaml")

    def test_missing_role_rejected(self, tmp_path):
        (tmp_path / "m.yaml").write_text(
            "schema_version: 1\n"
            "series: [{name: a, path: a.csv}]\n"
            "roles: {equity: a, fx: a}\n"
        )
        with pytest.raises(ConfigError, match="inflation"):
            load_manifest(tmp_path / "m.yaml")

    def test_wrong_schema_version_rejected(self, tmp_path):
        (tmp_path / "m.yaml").write_text("schema_version: 99\nroles: {}\n")
        with pytest.raises(ConfigError, match="schema_version"):
            load_manifest(tmp_path / "m.yaml")


def test_mutating_returned_values_leaves_series_intact():
    s = make_series("x", [1.0, 2.0])
    arr = s.values
    arr[0] = 9.0
    assert list(s.values) == [1.0, 2.0]
