import csv
import json
import textwrap

import pytest
import yaml

from cuspwave.cli import main
from cuspwave.config import parse_config_dict
from cuspwave.records import RECORD_FIELDS, read_json_table

BASE = textwrap.dedent(
    """\
    name: small
    experiment: {experiment}
    cell: {{L: 2.0}}
    charges:
      - {{Z: 2, R: [0.35, 0, 0]}}
      - {{Z: 2, R: [-0.35, 0, 0]}}
    cutoffs: {cutoffs}
    solver: {solver}
    reference: {{M_ref: 12}}
    """
)


def write_config(tmp_path, experiment="convergence", cutoffs="[4, 6, 8]", solver="{residual_tol: 1.0e-9}", extra=""):
    p = tmp_path / "cfg.yaml"
    p.write_text(BASE.format(experiment=experiment, cutoffs=cutoffs, solver=solver) + extra)
    return p


class TestPresetsCommand:
    def test_list(self, capsys):
        assert main(["presets"]) == 0
        assert capsys.readouterr().out.split() == ["fig1_z2", "fig1_z3", "fig2_z2", "fig2_z3", "fig3_z2", "fig3_z3"]

    def test_show(self, capsys):
        assert main(["presets", "fig2_z3"]) == 0
        doc = yaml.safe_load(capsys.readouterr().out)
        assert doc["experiment"] == "cancellation"
        parse_config_dict(doc)

    def test_unknown(self):
        assert main(["presets", "fig7"]) == 2


class TestRun:
    def test_convergence(self, tmp_path):
        out = tmp_path / "out"
        assert main(["run", str(write_config(tmp_path)), "--out", str(out), "-q"]) == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == ["small_records.csv", "small_records.json", "small_summary.json"]
        rows = list(csv.DictReader((out / "small_records.csv").open()))
        assert [int(r["M"]) for r in rows] == [4, 6, 8]
        assert list(rows[0]) == list(RECORD_FIELDS)
        recs, meta = read_json_table(out / "small_records.json")
        assert [r.E_M for r in recs] == [float(r["E_M"]) for r in rows]
        # the echoed config alone reproduces the run
        assert parse_config_dict(meta["config"]).cutoffs == (4, 6, 8)
        assert meta["constants"]["A"] == pytest.approx(2.5093827117510914)
        summary = json.loads((out / "small_summary.json").read_text())
        assert summary["converged"] is True
        assert set(summary["slopes"]) >= {"raw_error", "corrected_error"}

    def test_csv_only_and_deterministic(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["run", str(cfg), "--out", str(tmp_path / "a"), "--format", "csv", "-q"]) == 0
        assert main(["run", str(cfg), "--out", str(tmp_path / "b"), "--format", "csv", "-q", "--threads", "2"]) == 0
        assert not (tmp_path / "a" / "small_records.json").exists()
        assert (tmp_path / "a" / "small_records.csv").read_bytes() == (tmp_path / "b" / "small_records.csv").read_bytes()

    def test_correction_efficiency(self, tmp_path):
        out = tmp_path / "out"
        assert main(["run", str(write_config(tmp_path, "correction_efficiency")), "--out", str(out), "-q"]) == 0
        rows = list(csv.DictReader((out / "small_efficiency.csv").open()))
        assert list(rows[0]) == ["M", "raw_error", "corrected_error", "gain"]

    def test_cancellation(self, tmp_path):
        extra = "cancellation:\n  charges:\n    - {Z: 2, R: [0.375, 0, 0]}\n    - {Z: 2, R: [-0.375, 0, 0]}\n"
        out = tmp_path / "out"
        assert main(["run", str(write_config(tmp_path, "cancellation", extra=extra)), "--out", str(out), "-q"]) == 0
        rows = list(csv.DictReader((out / "small_cancellation.csv").open()))
        assert [int(r["M"]) for r in rows] == [4, 6, 8]
        assert all(float(r["D_M"]) <= float(r["S_M"]) for r in rows)
        assert "D_M" in json.loads((out / "small_summary.json").read_text())["slopes"]

    def test_tail_law(self, tmp_path):
        extra = "tail_law: {cutoff: 12, shells: [[3, 6], [6, 9]]}\n"
        out = tmp_path / "out"
        assert main(["run", str(write_config(tmp_path, "tail_law", extra=extra)), "--out", str(out), "-q"]) == 0
        rows = list(csv.DictReader((out / "small_tail.csv").open()))
        assert [float(r["r_lo"]) for r in rows] == [3.0, 6.0]

    def test_empty_cutoffs_writes_nothing(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", str(write_config(tmp_path, cutoffs="[]")), "--out", str(out)]) == 2
        assert "cutoffs" in capsys.readouterr().err
        assert not out.exists()

    def test_resource_guard(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path, cutoffs="[8]").read_text().replace("M_ref: 12", "M_ref: 90")
        (tmp_path / "big.yaml").write_text(cfg)
        assert main(["run", str(tmp_path / "big.yaml"), "--out", str(out), "-q"]) == 4
        assert not out.exists()

    def test_nonconvergence(self, tmp_path):
        out = tmp_path / "out"
        solver = "{method: lobpcg, residual_tol: 1.0e-13, max_iterations: 1}"
        cfg = write_config(tmp_path, cutoffs="[6, 7, 8]", solver=solver)
        assert main(["run", str(cfg), "--out", str(out), "-q"]) == 3
        rows = list(csv.DictReader((out / "small_records.csv").open()))
        assert all(r["converged"] == "false" for r in rows)
        assert json.loads((out / "small_summary.json").read_text())["converged"] is False

    def test_missing_config(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "o")]) == 2

    def test_bad_threads(self, tmp_path):
        assert main(["run", str(write_config(tmp_path)), "--threads", "0"]) == 2
