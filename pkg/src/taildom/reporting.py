"""Deterministic report serialization and a small ordered worker pool.

Report bodies must be byte-identical across reruns and worker counts, so
JSON is emitted with sorted keys and no timestamps (wall-clock metadata goes
to a sidecar file) and CSV rows are written in work-item order, RFC-4180
style.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np


def _coerce(obj):
    if isinstance(obj, dict):
        return {str(k): _coerce(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_coerce(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_coerce(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def stable_json_dumps(obj) -> str:
    """Canonical JSON: sorted keys, minimal separators, trailing newline."""
    return json.dumps(_coerce(obj), sort_keys=True, separators=(",", ":")) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(stable_json_dumps(obj), encoding="utf-8")


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")  # RFC 4180
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    Path(path).write_text(csv_text(header, rows), encoding="utf-8")


def parallel_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Map fn over items, preserving order; results are scheduling-independent.

    Every item must be a pure function of its arguments (the samplers key
    their generators by explicit stream ids, never by execution order).
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
