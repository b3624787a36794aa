"""Probe reports and deterministic CSV/JSON writers.

Reports carry the config echo, per-level/per-sample rows, fitted constants and
growth factors, and a verdict that is recomputable from the recorded numbers
and caps. Writers are bit-deterministic for a fixed report: floats are
serialized with repr (shortest round-trip) and JSON keys are sorted. No
timestamps are embedded.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "parakernel-report-v1"

VERDICTS = ("pass", "fail", "outside-hypothesis", "error")


@dataclass
class ProbeReport:
    experiment_id: str
    kind: str
    verdict: str
    expected: str = "pass"
    config: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")
        if self.expected not in ("pass", "fail"):
            raise ValueError("expected must be 'pass' or 'fail'")

    @property
    def ok(self) -> bool:
        """Suite success: verdict matches expectation, or outside-hypothesis."""
        if self.verdict == "outside-hypothesis":
            return True
        return self.verdict == self.expected

    @property
    def status(self) -> str:
        if self.verdict == "outside-hypothesis":
            return "outside-hypothesis"
        if self.verdict == self.expected:
            return "pass" if self.expected == "pass" else "expected-fail matched"
        return f"unexpected-{self.verdict}"

    def to_json_dict(self) -> dict:
        return _sanitize({
            "schema": SCHEMA_VERSION,
            "experiment_id": self.experiment_id,
            "kind": self.kind,
            "verdict": self.verdict,
            "expected": self.expected,
            "status": self.status,
            "ok": self.ok,
            "config": self.config,
            "summary": self.summary,
            "n_rows": len(self.rows),
        })


def _sanitize(obj):
    """Cast numpy scalars/arrays to plain Python types for stable JSON."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, float) and (np.isinf(obj) or np.isnan(obj)):
        return repr(obj)
    return obj


def _format_cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if isinstance(v, (np.bool_,)):
        return str(bool(v))
    return str(v)


def write_rows_csv(rows: list, path: Path) -> None:
    """CSV with the union of row keys in first-seen order; repr'd floats."""
    path = Path(path)
    columns: list = []
    for row in rows:
        for k in row:
            if k not in columns:
                columns.append(k)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row.get(c, "")) for c in columns])


def write_report(report: ProbeReport, outdir) -> dict:
    """Write <id>.csv and <id>.json; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{report.experiment_id}.csv"
    json_path = outdir / f"{report.experiment_id}.json"
    write_rows_csv(report.rows, csv_path)
    json_path.write_text(json.dumps(report.to_json_dict(), sort_keys=True, indent=1)
                         + "\n")
    return {"csv": str(csv_path), "json": str(json_path)}
