import csv
import json
import math
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cuspwave import __version__
from cuspwave.records import RECORD_FIELDS, ConvergenceRecord, emit_table, format_float, read_json_table

README = Path(__file__).resolve().parents[1] / "README.md"


def sample(M=8, **kw):
    base = dict(
        M=M, E_M=-0.7785283721358632, E_ref=-0.7804885638592145, raw_error=0.0019601917233512678,
        predicted_error=0.0021050434954846399, corrected_error=-0.00014485177213337209,
        psi_at_nuclei=(1.1430000000000001, 1.143), residual_coupling=0.0019489371685437848,
        tail_fit=0.931188228440846, ref_policy="high_cutoff_corrected",
    )
    base.update(kw)
    return ConvergenceRecord(**base)


class TestCsv:
    def test_one_record_two_lines(self, tmp_path):
        p = emit_table([sample()], "csv", tmp_path / "t.csv")
        lines = p.read_text().splitlines()
        assert len(lines) == 2
        assert lines[0].split(",") == list(RECORD_FIELDS)

    def test_column_count(self, tmp_path):
        p = emit_table([sample(8), sample(12)], "csv", tmp_path / "t.csv")
        rows = list(csv.reader(p.open()))
        assert all(len(r) == len(RECORD_FIELDS) for r in rows)

    def test_schema_documented(self):
        text = README.read_text()
        for name in RECORD_FIELDS:
            assert f"`{name}`" in text

    def test_full_precision(self, tmp_path):
        r = sample()
        row = next(csv.DictReader(emit_table([r], "csv", tmp_path / "t.csv").open()))
        assert float(row["E_M"]) == r.E_M
        assert [float(x) for x in row["psi_at_nuclei"].split(";")] == list(r.psi_at_nuclei)
        assert row["converged"] == "true"

    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_format_float_roundtrip(self, x):
        assert float(format_float(x)) == x

    def test_nonfinite(self):
        assert format_float(float("nan")) == "nan"
        assert format_float(float("-inf")) == "-inf"

    def test_deterministic(self, tmp_path):
        recs = [sample(8), sample(12, converged=False)]
        a = emit_table(recs, "csv", tmp_path / "a.csv").read_bytes()
        b = emit_table(recs, "csv", tmp_path / "b.csv").read_bytes()
        assert a == b

    def test_dict_rows(self, tmp_path):
        p = emit_table([{"M": 8, "D_M": 1e-5, "S_M": 2e-4}], "csv", tmp_path / "d.csv")
        assert p.read_text() == "M,D_M,S_M\n8,1.0000000000000001e-05,0.00020000000000000001\n"


class TestJson:
    def test_roundtrip(self, tmp_path):
        recs = [sample(8), sample(12, converged=False), sample(16, psi_at_nuclei=(0.5,))]
        p = emit_table(recs, "json", tmp_path / "t.json", {"config": {"L": 2.0}})
        back, meta = read_json_table(p)
        assert back == recs
        assert meta["config"] == {"L": 2.0}
        assert meta["version"] == __version__
        assert "timestamp" in meta

    def test_roundtrip_nan(self, tmp_path):
        r = sample(residual_coupling=math.nan)
        back, _ = read_json_table(emit_table([r], "json", tmp_path / "t.json"))
        assert math.isnan(back[0].residual_coupling)
        assert back[0].E_M == r.E_M
        json.loads((tmp_path / "t.json").read_text())  # strict JSON, no NaN literals

    def test_schema_fields(self, tmp_path):
        doc = json.loads(emit_table([sample()], "json", tmp_path / "t.json").read_text())
        assert doc["fields"] == list(RECORD_FIELDS)
        assert set(doc["records"][0]) == set(RECORD_FIELDS)


class TestErrors:
    def test_empty(self, tmp_path):
        with pytest.raises(ValueError):
            emit_table([], "csv", tmp_path / "t.csv")

    def test_unwritable(self, tmp_path):
        with pytest.raises(OSError):
            emit_table([sample()], "csv", tmp_path / "missing" / "t.csv")

    def test_format(self, tmp_path):
        with pytest.raises(ValueError):
            emit_table([sample()], "xml", tmp_path / "t.xml")
