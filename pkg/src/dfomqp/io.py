"""Problem JSON files and CSV export."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import InfeasibleSpecError, QpProblem, RawProblem, ingest

_TOKENS = {"inf": math.inf, "+inf": math.inf, "-inf": -math.inf, "Infinity": math.inf, "-Infinity": -math.inf}


def _num(x) -> float:
    if isinstance(x, str):
        if x not in _TOKENS:
            raise InfeasibleSpecError(f"bad numeric token {x!r}")
        return _TOKENS[x]
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise InfeasibleSpecError(f"expected a number, got {x!r}")
    return float(x)


def _array(doc: dict, key: str, size: int) -> np.ndarray:
    if key not in doc:
        raise InfeasibleSpecError(f"missing field {key!r}")
    vals = doc[key]
    if not isinstance(vals, list) or len(vals) != size:
        raise InfeasibleSpecError(f"{key} must be a list of {size} numbers")
    return np.array([_num(v) for v in vals], dtype=float)


def _token(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(x)


def raw_from_dict(doc: dict) -> RawProblem:
    try:
        n, p_raw = int(doc["n"]), int(doc["p_raw"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InfeasibleSpecError("n and p_raw are required integers") from exc
    if n < 1 or p_raw < 0:
        raise InfeasibleSpecError("need n >= 1 and p_raw >= 0")
    return RawProblem(
        Q=_array(doc, "Q", n * n).reshape(n, n),
        q=_array(doc, "q", n),
        G_raw=_array(doc, "G_raw", p_raw * n).reshape(p_raw, n),
        g_raw=_array(doc, "g_raw", p_raw),
        lbA=_array(doc, "lbA", p_raw),
        ubA=_array(doc, "ubA", p_raw),
        lb=_array(doc, "lb", n),
        ub=_array(doc, "ub", n),
    )


def raw_to_dict(raw: RawProblem) -> dict:
    G = np.asarray(raw.G_raw, dtype=float)
    n = int(np.asarray(raw.q).size)
    return {
        "n": n,
        "p_raw": int(G.shape[0]),
        "Q": [_token(v) for v in np.asarray(raw.Q, float).reshape(-1)],
        "q": [_token(v) for v in np.asarray(raw.q, float)],
        "G_raw": [_token(v) for v in G.reshape(-1)],
        "g_raw": [_token(v) for v in np.asarray(raw.g_raw, float)],
        "lbA": [_token(v) for v in np.asarray(raw.lbA, float)],
        "ubA": [_token(v) for v in np.asarray(raw.ubA, float)],
        "lb": [_token(v) for v in np.asarray(raw.lb, float)],
        "ub": [_token(v) for v in np.asarray(raw.ub, float)],
    }


def load_problem(path: str | Path) -> QpProblem:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InfeasibleSpecError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InfeasibleSpecError("problem file must hold a JSON object")
    return ingest(raw_from_dict(doc))


def dump_problem(prob: QpProblem | RawProblem) -> str:
    raw = prob.to_raw() if isinstance(prob, QpProblem) else prob
    return json.dumps(raw_to_dict(raw), indent=1) + "\n"


def save_problem(prob: QpProblem | RawProblem, path: str | Path) -> None:
    Path(path).write_text(dump_problem(prob))


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def write_trace(path: str | Path, trace) -> None:
    from .dual import TRACE_FIELDS

    write_rows(path, TRACE_FIELDS, (dataclasses.astuple(r) for r in trace))


def read_rows(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
