"""Rendering of result tables as markdown, CSV and JSON."""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Any, Iterable, Sequence

from .mse import MseReport


def fmt(value: Any, full: bool = False) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value) if full else f"{value:.6g}"
    return str(value)


def markdown(header: Sequence[str], rows: Iterable[Sequence[Any]], full: bool = False) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    for row in rows:
        lines.append("| " + " | ".join(fmt(v, full) for v in row) + " |")
    return "\n".join(lines) + "\n"


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]], full: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v, full) for v in row])
    return buf.getvalue()


def json_text(obj: Any) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


MSE_CSV_HEADER = ("estimator", "mse", "rel_eff", "variant", "breakdown")


def mse_table(reports: Sequence[MseReport], fmt_name: str, full: bool = False) -> str:
    """Render a comparison table; markdown mirrors the published table's layout."""
    if fmt_name == "json":
        return json_text([r.to_dict() for r in reports])
    if fmt_name == "csv":
        rows = [
            (str(r.spec), r.mse if r.error is None else "error", r.relative_efficiency, str(r.variant), r.breakdown_flag)
            for r in reports
        ]
        return csv_text(MSE_CSV_HEADER, rows, full)

    rows = []
    notes: list[str] = []
    for r in reports:
        marks = ""
        if r.breakdown_flag:
            marks += " (breakdown)"
        if r.note:
            if r.note not in notes:
                notes.append(r.note)
            marks += f" [{notes.index(r.note) + 1}]"
        mse = f"error: {r.error}" if r.error else fmt(r.mse, full)
        rows.append((r.label + marks, str(r.spec), mse, r.relative_efficiency, r.paper_value))
    out = markdown(("Estimator", "Spec", "MSE", "RE", "Published"), rows, full)
    if any(r.breakdown_flag for r in reports):
        out += "\n(breakdown): the first-order quadratic has a non-positive or non-positive-definite minimum; value shown raw.\n"
    for k, note in enumerate(notes, 1):
        out += f"\n[{k}] {note}\n"
    return out
