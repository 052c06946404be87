"""Plain-text artifacts: CSV tables and JSON reports.

Files are written to a temporary sibling and renamed into place, so a reader
never sees a half-written artifact. Floats carry 17 significant digits and
infinities are spelled ``inf`` / ``-inf``, which Python's ``float`` parses.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .sus import CcdfCurve, LevelRecord

__all__ = [
    "fmt",
    "write_atomic",
    "write_csv",
    "write_json",
    "levels_rows",
    "write_levels",
    "write_ccdf",
    "write_posterior",
    "evidence_payload",
    "level_table",
    "read_csv",
]

LEVEL_COLUMNS = ("level", "b_i", "seed_count", "acceptance_rate", "gamma_i", "delta_i", "c_i", "a_i")
CCDF_COLUMNS = ("b", "ln_ccdf", "V")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def write_atomic(path, data: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    write_atomic(path, buf.getvalue())


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no infinities; spell them as strings
        return x if math.isfinite(x) else fmt(x)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload: dict) -> None:
    write_atomic(path, json.dumps(_json_safe(payload), indent=2) + "\n")


def _c_value(b: float) -> float:
    try:
        return math.exp(-b)
    except OverflowError:
        return math.inf


def levels_rows(levels: Sequence[LevelRecord], a_values: Optional[Sequence[float]] = None) -> list:
    """Rows of levels.csv; ``a_values[k-1]`` belongs to level k, level 0 has a = 1."""
    rows = []
    for lvl in levels:
        if a_values is None:
            a = math.nan
        elif lvl.index == 0:
            a = 1.0
        else:
            a = a_values[lvl.index - 1] if lvl.index - 1 < len(a_values) else math.nan
        rate = lvl.acceptance_rate if lvl.index > 0 else math.nan
        rows.append((lvl.index, lvl.threshold, lvl.seed_count, rate, lvl.gamma, lvl.delta, _c_value(lvl.threshold), a))
    return rows


def write_levels(path, levels: Sequence[LevelRecord], a_values: Optional[Sequence[float]] = None) -> None:
    write_csv(path, LEVEL_COLUMNS, levels_rows(levels, a_values))


def write_ccdf(path, curve: CcdfCurve) -> None:
    write_csv(path, CCDF_COLUMNS, zip(curve.b, curve.ln_p, curve.V))


def write_posterior(path, theta: np.ndarray) -> None:
    header = [f"theta{j + 1}" for j in range(theta.shape[1])]
    write_csv(path, header, theta.tolist())


def evidence_payload(result) -> dict:
    ev = result.evidence
    return {
        "ln_evidence": ev.ln_evidence,
        "cov_proxy": ev.cov_proxy,
        "stopping_level": ev.stopping_level,
        "b_m": ev.b_m,
        "a_sequence": [a.p for a in result.a_sequence],
        "tol": result.stopping.tol,
    }


def level_table(levels: Sequence[LevelRecord], a_values: Optional[Sequence[float]] = None) -> str:
    """Console table: level | b_k | c_k = e^-b_k | a_k."""
    lines = [f"{'k':>3} | {'b_k':>10} | {'c_k':>10} | {'a_k':>11}"]
    for idx, b, *_rest, c, a in levels_rows(levels, a_values):
        if idx == 0:
            lines.append(f"{idx:>3} | {'-inf':>10} | {'':>10} | {'':>11}")
        else:
            a_txt = f"{a:.4e}" if not math.isnan(a) else ""
            lines.append(f"{idx:>3} | {b:>10.3e} | {c:>10.3e} | {a_txt:>11}")
    return "\n".join(lines)


def read_csv(path) -> tuple:
    """(header, float array) for an artifact written by :func:`write_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return header, np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
