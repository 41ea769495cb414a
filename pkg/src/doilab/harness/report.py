"""In-memory experiment reports and their CSV / JSON / text renderings."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

GENERATOR_VERSION = "herm-gauss-v1"
GENERATOR_DOC = "i.i.d. complex standard normal entries, Hermitized as (M + M*)/2; per-trial rng = seed XOR trial"


def fingerprint(M) -> str:
    """Short content hash of a matrix."""
    arr = np.ascontiguousarray(np.asarray(M, dtype=complex))
    h = hashlib.sha256(str(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()[:16]


@dataclass
class TrialRecord:
    trial: int
    fingerprints: tuple
    lhs: float
    rhs: float
    ratio: Optional[float] = None
    passed: bool = True
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ratio is None and self.rhs > 0:
            self.ratio = self.lhs / self.rhs


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


def _clean(v: Any) -> Any:
    """JSON-safe values: non-finite floats become strings, numpy scalars plain."""
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, complex):
        return f"{v.real!r}{v.imag:+}i"
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    return v


def _flatten(d: dict, prefix: str = "") -> list:
    out = []
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and v:
            out += _flatten(v, key + ".")
        elif isinstance(v, list):
            out.append((key, ";".join(_cell(x) for x in v)))
        else:
            out.append((key, _cell(v)))
    return out


def _cell(v: Any) -> str:
    v = _clean(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return "" if v is None else str(v)


@dataclass
class Report:
    experiment: str
    seed: int
    config: dict
    columns: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    attachments: dict = field(default_factory=dict)  # extension -> text

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str, passed: bool, detail: str = "") -> bool:
        self.checks.append(Check(name, bool(passed), detail))
        return bool(passed)

    def add_records(self, records, extra_cols=()) -> None:
        self.columns = ["trial", "fingerprints", "lhs", "rhs", "ratio", "pass", *extra_cols]
        for r in records:
            self.rows.append([r.trial, ";".join(r.fingerprints), r.lhs, r.rhs, r.ratio, r.passed,
                              *[r.extra.get(c) for c in extra_cols]])

    def header_lines(self) -> list:
        lines = [f"experiment={self.experiment}", f"seed={self.seed}", f"generator={GENERATOR_VERSION}"]
        lines += [f"note={n}" for n in self.notes]
        return lines

    def summary_document(self) -> dict:
        return _clean({
            "experiment": self.experiment,
            "seed": self.seed,
            "generator": GENERATOR_VERSION,
            "passed": self.passed,
            "summary": self.summary,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
        })

    def to_csv(self) -> str:
        buf = io.StringIO()
        for ln in self.header_lines():
            buf.write(f"# {ln}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_cell(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = self.summary_document()
        doc["config"] = _clean(self.config)
        doc["generator_doc"] = GENERATOR_DOC
        doc["notes"] = list(self.notes)
        doc["columns"] = list(self.columns)
        doc["rows"] = _clean(self.rows)
        return json.dumps(doc, indent=2) + "\n"

    def summary_json(self) -> str:
        return json.dumps(self.summary_document(), indent=2) + "\n"

    def to_text(self) -> str:
        out = [*self.header_lines()]
        out += [f"{k}={v}" for k, v in _flatten(_clean(self.config), "config.")]
        out += [f"{k}={v}" for k, v in _flatten(_clean(self.summary))]
        for c in self.checks:
            out.append(f"check.{c.name}={'pass' if c.passed else 'FAIL'}" + (f" ({c.detail})" if c.detail else ""))
        out.append(f"result={'pass' if self.passed else 'FAIL'}")
        return "\n".join(out) + "\n"

    def render(self, fmt: str) -> str:
        return {"csv": self.to_csv, "json": self.to_json, "text": self.to_text}[fmt]()


def atomic_write(path: str, text: str) -> None:
    """Write to a temporary file in the target directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report: Report, out_dir: str, fmt: str) -> list:
    """Write ``<experiment>-<seed>.<ext>``; csv output also gets a JSON summary
    next to it, plus any attachments the experiment produced."""
    stem = os.path.join(out_dir, f"{report.experiment}-{report.seed}")
    written = []
    atomic_write(f"{stem}.{fmt if fmt != 'text' else 'txt'}", report.render(fmt))
    written.append(f"{stem}.{fmt if fmt != 'text' else 'txt'}")
    if fmt == "csv":
        atomic_write(f"{stem}.json", report.summary_json())
        written.append(f"{stem}.json")
    for ext, text in sorted(report.attachments.items()):
        atomic_write(f"{stem}.{ext}", text)
        written.append(f"{stem}.{ext}")
    return written
