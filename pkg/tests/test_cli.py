from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from coordest.cli import (
    RunConfig,
    ingest,
    main,
    parse_scheme,
    parse_scheme_file,
    resolve_items,
)
from coordest.model import PiecewiseLinearMap, PpsMap
from coordest.samplers import read_samples

DEMO_CSV = Path(__file__).resolve().parent.parent / "data" / "demo_two_instances.csv"


@pytest.fixture()
def demo_csv(tmp_path) -> Path:
    return DEMO_CSV


class TestIngest:
    def test_demo_file(self):
        data = ingest(DEMO_CSV)
        assert data.n_items == 8 and data.r == 2
        assert data.vector("1") == (1.0, 3.0)

    def test_empty_data_section(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("item,v1,v2\n")
        data = ingest(p)
        assert data.n_items == 0 and data.r == 2

    def test_negative_value_names_cell(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("item,v1,v2\na,1,2\nb,-1,0\n")
        with pytest.raises(ValueError, match=r"row 3, column v1"):
            ingest(p)

    def test_duplicate_id(self, tmp_path):
        p = tmp_path / "dup.csv"
        p.write_text("item,v1\na,1\na,2\n")
        with pytest.raises(ValueError, match="duplicate"):
            ingest(p)

    def test_malformed_row(self, tmp_path):
        p = tmp_path / "short.csv"
        p.write_text("item,v1,v2\na,1\n")
        with pytest.raises(ValueError, match="row 2"):
            ingest(p)

    def test_bad_number(self, tmp_path):
        p = tmp_path / "nan.csv"
        p.write_text("item,v1\na,abc\n")
        with pytest.raises(ValueError, match="bad number"):
            ingest(p)


class TestSchemeParsing:
    def test_shared_threshold(self):
        scheme = parse_scheme("pps:tau=4", r=2)
        assert scheme.common_pps_tau() == 4.0

    def test_per_instance_thresholds(self):
        scheme = parse_scheme("pps:tau=4,2", r=2)
        assert [m.tau_star for m in scheme.maps] == [4.0, 2.0]

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            parse_scheme("exp:rate=2", r=2)

    def test_scheme_file(self):
        text = """
        # per-instance maps
        tau.1 = pps:4
        tau.2 = pwl:0:0,0.5:1,1:4
        """
        scheme = parse_scheme_file(text, r=2)
        assert isinstance(scheme.maps[0], PpsMap)
        assert isinstance(scheme.maps[1], PiecewiseLinearMap)
        assert scheme.maps[1].value(0.75) == 2.5

    def test_scheme_file_must_cover_instances(self):
        with pytest.raises(ValueError):
            parse_scheme_file("tau.1 = pps:4", r=2)


class TestResolveItems:
    def test_modes(self):
        data = ingest(DEMO_CSV)
        assert resolve_items("all", data)[0] == list(data.item_ids)
        both, _ = resolve_items("both-positive", data)
        assert both == ["1", "3", "6", "7"]
        pos2, _ = resolve_items("positive-in:2", data)
        assert "4" not in pos2 and "1" in pos2
        some, _ = resolve_items("1,3", data)
        assert some == ["1", "3"]

    def test_unknown_id(self):
        data = ingest(DEMO_CSV)
        with pytest.raises(ValueError, match="unknown item"):
            resolve_items("1,99", data)


class TestRunConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            RunConfig(input=DEMO_CSV, reps=0)
        with pytest.raises(ValueError):
            RunConfig(input=DEMO_CSV, grid_n=8)
        with pytest.raises(ValueError):
            RunConfig(input=DEMO_CSV, depth=4)


class TestEstimateCommand:
    def test_exact_golden_values(self, capsys):
        argv = [
            "estimate", "--input", str(DEMO_CSV), "--query", "lpp", "--p", "2",
            "--items", "1,2,3,4", "--estimator", "exact",
        ]
        assert main(argv) == 0
        rec = json.loads(capsys.readouterr().out)
        assert rec["value"] == 18.0

    def test_exponent_embedded_in_query(self, capsys):
        argv = [
            "estimate", "--input", str(DEMO_CSV), "--query", "lpp:p=2",
            "--items", "1,2,3,4", "--estimator", "exact",
        ]
        assert main(argv) == 0
        assert json.loads(capsys.readouterr().out)["value"] == 18.0

    def test_unknown_query_rejected(self):
        argv = ["estimate", "--input", str(DEMO_CSV), "--query", "median", "--estimator", "exact"]
        with pytest.raises(ValueError, match="unknown query"):
            main(argv)

    def test_monte_carlo_record(self, tmp_path):
        out = tmp_path / "mc.json"
        argv = [
            "estimate", "--input", str(DEMO_CSV), "--scheme", "pps:tau=4",
            "--query", "l1", "--items", "1,3", "--estimator", "j",
            "--salt", "3", "--reps", "2000", "--out", str(out),
        ]
        assert main(argv) == 0
        rec = json.loads(out.read_text())
        assert rec["reps"] == 2000
        assert abs(rec["value"] - 5.0) <= 3.0 * rec["stderr"]

    def test_determinism_byte_identical(self, tmp_path):
        outs = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            argv = [
                "estimate", "--input", str(DEMO_CSV), "--scheme", "pps:tau=4",
                "--query", "jaccard", "--estimator", "j", "--salt", "11",
                "--out", str(out),
            ]
            assert main(argv) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_bottomk_mode_logs_thresholds(self, tmp_path):
        out = tmp_path / "bk.json"
        argv = [
            "estimate", "--input", str(DEMO_CSV), "--query", "distinct",
            "--estimator", "ht", "--salt", "2", "--k", "2", "--rank", "pps",
            "--instance", "2", "--out", str(out),
        ]
        assert main(argv) == 0
        rec = json.loads(out.read_text())
        assert rec["k"] == 2 and len(rec["members"]) == 2
        for m in rec["members"]:
            assert m["threshold"] > 0 and 0 < m["inclusion_probability"] <= 1

    def test_empty_input_answers_zero(self, tmp_path, capsys):
        p = tmp_path / "empty.csv"
        p.write_text("item,v1,v2\n")
        argv = ["estimate", "--input", str(p), "--query", "maxsum", "--estimator", "exact"]
        assert main(argv) == 0
        assert json.loads(capsys.readouterr().out)["value"] == 0.0

    def test_voptimal_oracle_estimator(self, tmp_path):
        out = tmp_path / "vo.json"
        argv = [
            "estimate", "--input", str(DEMO_CSV), "--scheme", "pps:tau=4",
            "--query", "maxsum", "--items", "6,7,8", "--estimator", "voptimal-oracle",
            "--salt", "4", "--out", str(out),
        ]
        assert main(argv) == 0
        rec = json.loads(out.read_text())
        assert rec["value"] >= 0.0


class TestSampleCommand:
    def test_round_trip(self, tmp_path):
        out = tmp_path / "samples.jsonl"
        argv = [
            "sample", "--input", str(DEMO_CSV), "--scheme", "pps:tau=4",
            "--salt", "7", "--out", str(out),
        ]
        assert main(argv) == 0
        from coordest.cli import parse_scheme as ps

        with out.open() as fp:
            loaded = read_samples(fp, ps("pps:tau=4", 2))
        assert set(loaded) == {str(i) for i in range(1, 9)}
        from coordest.model import hash_seed

        for item, outcome in loaded.items():
            assert outcome.seed == hash_seed(item, 7)


class TestAnalyzeCommand:
    def test_reports_and_exit_code(self, tmp_path):
        out = tmp_path / "reports.jsonl"
        argv = [
            "analyze", "--input", str(DEMO_CSV), "--scheme", "pps:tau=4",
            "--function", "rg:p=2", "--items", "1,2,3", "--grid-n", "128",
            "--out", str(out),
        ]
        assert main(argv) == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 3
        for line in lines:
            rec = json.loads(line)
            assert rec["ratio"] <= 84.0
            assert rec["estimable"] and rec["finite_variance"] and rec["bounded"]

    def test_schema_round_trip(self, tmp_path):
        from coordest.analysis import AnalysisReport

        out = tmp_path / "reports.jsonl"
        argv = [
            "analyze", "--input", str(DEMO_CSV), "--scheme", "pps:tau=4",
            "--function", "max", "--items", "1", "--out", str(out),
        ]
        assert main(argv) == 0
        rec = json.loads(out.read_text())
        report = AnalysisReport.from_dict(rec)
        assert report.competitive_ok

    def test_synthetic_sweep(self, tmp_path):
        # one-sided squared difference over v = (a, 0), a = 0.1 .. 1.0
        rows = "\n".join(f"a{k},{k / 10:.1f},0" for k in range(1, 11))
        src = tmp_path / "sweep.csv"
        src.write_text("item,v1,v2\n" + rows + "\n")
        out = tmp_path / "sweep.jsonl"
        argv = [
            "analyze", "--input", str(src), "--scheme", "pps:tau=1",
            "--function", "one_sided_rg:p=2,hi=1,lo=2", "--grid-n", "256",
            "--out", str(out),
        ]
        assert main(argv) == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 10
        for line in lines:
            assert json.loads(line)["ratio"] <= 84.0


class TestCharacterizeCommand:
    def test_verdicts_and_curves(self, tmp_path):
        out = tmp_path / "verdicts.jsonl"
        curves = tmp_path / "curves.csv"
        argv = [
            "characterize", "--input", str(DEMO_CSV), "--scheme", "pps:tau=4",
            "--function", "one_sided_rg:p=2,hi=1,lo=2", "--items", "1,4",
            "--grid-n", "64", "--out", str(out), "--curves", str(curves),
        ]
        assert main(argv) == 0
        for line in out.read_text().strip().splitlines():
            rec = json.loads(line)
            assert rec["chain_ok"]
        with curves.open() as fp:
            rows = list(csv.reader(fp))
        assert rows[0] == ["item", "u", "lower_bound", "hull", "j_estimate", "v_optimal"]
        assert len(rows) > 10
