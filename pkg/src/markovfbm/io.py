"""Text formats: sweep CSV, path CSV/JSON and pricing JSON.

CSV numbers carry 17 significant digits.  JSON uses Python's shortest
round-trip float repr, which parses back to the identical double.
"""

from __future__ import annotations

import json
from typing import IO, Iterable, Sequence

from .analysis import ErrorRecord, RateFit, predicted_rate

SWEEP_HEADER = ("H", "m", "n", "r", "T", "abs_error", "rel_error")
PATHS_HEADER = ("path", "t", "whn")


def fmt(x) -> str:
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    return format(float(x), ".17g")


def _row(values: Iterable) -> str:
    return ",".join(fmt(v) for v in values) + "\n"


def write_sweep_csv(records: Sequence[ErrorRecord], fit: RateFit | None, out: IO[str]) -> None:
    """Sweep rows, then (if given) the rate fit as one JSON line."""
    out.write(",".join(SWEEP_HEADER) + "\n")
    for rec in records:
        out.write(_row(getattr(rec, f) for f in SWEEP_HEADER))
    if fit is not None and records:
        out.write(json.dumps(fit_document(records, fit)) + "\n")


def fit_document(records: Sequence[ErrorRecord], fit: RateFit) -> dict:
    first = records[0]
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "residual": fit.residual,
        "predicted": predicted_rate(first.H, first.m),
    }


def read_sweep_csv(text: str) -> tuple[list[ErrorRecord], dict | None]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or tuple(lines[0].split(",")) != SWEEP_HEADER:
        raise ValueError("not an error-sweep CSV")
    records, fit = [], None
    for ln in lines[1:]:
        if ln.startswith("{"):
            fit = json.loads(ln)
            continue
        H, m, n, r, T, a, e = ln.split(",")
        records.append(ErrorRecord(float(H), int(m), int(n), float(r), float(T), float(a), float(e)))
    return records, fit


def write_paths_csv(batch, out: IO[str], provenance: dict | None = None) -> None:
    """Long format ``path,t,whn``; provenance, when given, is a trailing JSON line."""
    out.write(",".join(PATHS_HEADER) + "\n")
    times = [fmt(t) for t in batch.times]
    for p, row in enumerate(batch.whn):
        out.writelines(f"{p},{t},{fmt(v)}\n" for t, v in zip(times, row))
    if provenance is not None:
        out.write(json.dumps(provenance) + "\n")


def paths_document(batch, provenance: dict | None = None) -> dict:
    doc = {
        "times": batch.times.tolist(),
        "whn": batch.whn.tolist(),
        "seed": batch.seed,
        "scheme_id": batch.scheme_id,
    }
    if provenance:
        doc["config"] = provenance
    return doc
