"""Per-cutoff result rows and their CSV/JSON serialization."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

__all__ = ["ConvergenceRecord", "RECORD_FIELDS", "emit_table", "read_json_table", "read_csv_table", "format_float"]


@dataclass(frozen=True)
class ConvergenceRecord:
    M: int
    E_M: float
    E_ref: float
    raw_error: float
    predicted_error: float
    corrected_error: float
    psi_at_nuclei: tuple = ()
    residual_coupling: float = math.nan
    tail_fit: float = math.nan
    ref_policy: str = ""
    converged: bool = True

    def __post_init__(self):
        object.__setattr__(self, "psi_at_nuclei", tuple(float(x) for x in self.psi_at_nuclei))

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["psi_at_nuclei"] = list(self.psi_at_nuclei)
        return d


RECORD_FIELDS = tuple(f.name for f in dataclasses.fields(ConvergenceRecord))


def format_float(x) -> str:
    """17 significant digits, locale independent; ``nan``/``inf`` spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (tuple, list, np.ndarray)):
        return ";".join(format_float(v) for v in value)
    return format_float(value)


def _rows(records):
    """Either ConvergenceRecords or plain dicts sharing the same keys."""
    records = list(records)
    if not records:
        raise ValueError("emit_table needs at least one record")
    if dataclasses.is_dataclass(records[0]):
        if isinstance(records[0], ConvergenceRecord):
            header = list(RECORD_FIELDS)
            dicts = [r.as_dict() for r in records]
        else:
            header = [f.name for f in dataclasses.fields(records[0])]
            dicts = [dataclasses.asdict(r) for r in records]
    else:
        header = list(records[0].keys())
        dicts = [dict(r) for r in records]
    return header, dicts


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        # JSON has no nan/inf; keep them as strings so round trips stay exact
        return x if math.isfinite(x) else format_float(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def emit_table(records, format: str, path, metadata: dict | None = None) -> Path:
    """Write ``records`` to ``path`` as CSV or JSON and return the path.

    CSV has one header row and one row per record.  JSON holds
    ``{"metadata": ..., "fields": [...], "records": [...]}``; a timestamp and
    the package version are added to the metadata.
    """
    header, dicts = _rows(records)
    path = Path(path)
    fmt = format.lower()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for d in dicts:
            w.writerow([_cell(d[h]) for h in header])
        path.write_text(buf.getvalue(), encoding="utf-8")
    elif fmt == "json":
        from . import __version__

        meta = dict(metadata or {})
        meta.setdefault("version", __version__)
        meta.setdefault("timestamp", datetime.now(timezone.utc).isoformat())
        doc = {"metadata": _jsonable(meta), "fields": header, "records": [_jsonable(d) for d in dicts]}
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown table format {format!r}")
    return path


def _unfloat(x):
    if isinstance(x, list):
        return [_unfloat(v) for v in x]
    if isinstance(x, str) and x in ("nan", "inf", "-inf"):
        return float(x)
    return x


def read_json_table(path) -> tuple[list, dict]:
    """Inverse of ``emit_table(..., "json")``: ``(records, metadata)``.

    Rows with exactly the ConvergenceRecord fields come back as records, others as dicts.
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    rows = [{k: _unfloat(v) for k, v in r.items()} for r in doc["records"]]
    if tuple(doc["fields"]) == RECORD_FIELDS:
        rows = [ConvergenceRecord(**r) for r in rows]
    return rows, doc["metadata"]


def read_csv_table(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
