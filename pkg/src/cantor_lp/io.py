"""File output: atomic writes, RFC-4180 CSV, JSON with stable float text."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

#: column order for norm reports and scaling sweeps
SWEEP_COLUMNS = ("M", "rho", "p", "value", "stderr", "box_part", "tail_bound", "convergence_estimate", "seed")


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write_bytes(path, data: bytes) -> Path:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_umask())  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def plain(obj):
    """Recursively convert numpy scalars/arrays, Fractions and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def dumps(doc) -> str:
    return json.dumps(plain(doc), indent=2, allow_nan=False) + "\n"


def write_json(path, doc) -> Path:
    return atomic_write_text(path, dumps(doc))


def read_json(path):
    return json.loads(Path(path).read_text())


def _cell(v) -> str:
    v = plain(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)  # shortest round-trip decimal
    if isinstance(v, (list, dict)):
        return json.dumps(v)
    return str(v)


def columns_for(rows: Iterable[dict], preferred: Sequence[str] = SWEEP_COLUMNS) -> list[str]:
    """Preferred columns that occur, in order, then the remaining keys by first appearance."""
    seen = []
    for r in rows:
        for k in r:
            if k not in seen:
                seen.append(k)
    head = [c for c in preferred if c in seen]
    return head + [c for c in seen if c not in head]


def csv_text(rows: Sequence[dict], columns: Optional[Sequence[str]] = None) -> str:
    columns = list(columns) if columns is not None else columns_for(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(path, rows: Sequence[dict], columns: Optional[Sequence[str]] = None) -> Path:
    return atomic_write_text(path, csv_text(rows, columns))
