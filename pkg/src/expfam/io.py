"""File input and output.

Writes are atomic (temporary file in the target directory, then rename) and
deterministic: the same inputs always give byte-identical files.  CSV files
are UTF-8 with a header row, '.' decimals, shortest round-trip float text and
the literal ``NaN`` for missing values.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ParseError, ValidationError
from .families import Dataset

__all__ = [
    "atomic_write",
    "format_value",
    "dumps_json",
    "write_json",
    "read_json",
    "write_csv",
    "read_csv",
    "emit_report",
    "write_dataset",
    "read_dataset",
    "read_matrix",
]


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and ``os.replace``."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    if not directory.is_dir():
        raise FileNotFoundError(f"{path}: directory {directory} does not exist")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _plain(obj):
    """Convert numpy scalars/arrays and sets into JSON-ready Python values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted(_plain(v) for v in obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    return obj


def dumps_json(obj) -> str:
    # NaN and Infinity are written as the JavaScript literals Python's json accepts.
    return json.dumps(_plain(obj), indent=2, allow_nan=True, ensure_ascii=False) + "\n"


def write_json(obj, path) -> None:
    atomic_write(path, dumps_json(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"{path}: line {exc.lineno}, column {exc.colno}") from None


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return repr(v)
    return str(v)


def _csv_text(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValidationError(f"row has {len(row)} values, header has {len(columns)}")
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(columns: Sequence[str], rows: Iterable[Sequence], path) -> None:
    atomic_write(path, _csv_text(columns, rows))


def _parse_cell(text: str):
    if text == "true":
        return True
    if text == "false":
        return False
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)  # accepts NaN / Infinity
    except ValueError:
        return text


def read_csv(path):
    """Read a CSV written by :func:`write_csv`; returns ``(columns, rows)`` with typed cells."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            columns = next(reader)
        except StopIteration:
            raise ParseError("empty file, header row missing", str(path)) from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(columns):
                raise ParseError(f"expected {len(columns)} fields, found {len(row)}", f"{path}: line {lineno}")
            rows.append([_parse_cell(c) for c in row])
    return columns, rows


def emit_report(results, fmt: str, path, columns: Optional[Sequence[str]] = None) -> None:
    """Write results as JSON (any structure) or CSV (a list of records or dicts).

    For CSV the header comes from ``columns``, else from the first record;
    an empty list gives a header-only file with the experiment-record columns.
    """
    if fmt == "json":
        write_json(results, path)
        return
    if fmt != "csv":
        raise ValidationError(f"format must be 'json' or 'csv', got {fmt!r}")
    results = list(results)
    if columns is None:
        if not results:
            from .experiments import ExperimentRecord

            columns = ExperimentRecord.columns()
        elif hasattr(results[0], "columns"):
            columns = results[0].columns()
        else:
            columns = list(results[0])
    columns = list(columns)
    rows = [r.row() if hasattr(r, "row") else [r[c] for c in columns] for r in results]
    write_csv(columns, rows, path)


# --------------------------------------------------------------------------- #
# Datasets and matrices
# --------------------------------------------------------------------------- #


def write_dataset(data: Dataset, path) -> None:
    """Columns ``t1..tp`` and, for GLM data, the covariates ``x1..xp``."""
    T = np.asarray(data.sufficient_stats)
    p = T.shape[1]
    columns = [f"t{j + 1}" for j in range(p)]
    M = T
    if data.covariates is not None:
        X = np.asarray(data.covariates)
        columns += [f"x{j + 1}" for j in range(X.shape[1])]
        M = np.hstack([T, X])
    write_csv(columns, M.tolist(), path)


def read_dataset(path) -> Dataset:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file, header row missing", str(path)) from None
        t_cols = [i for i, h in enumerate(header) if h.startswith("t")]
        x_cols = [i for i, h in enumerate(header) if h.startswith("x")]
        p = len(t_cols)
        if p == 0 or [header[i] for i in t_cols] != [f"t{j + 1}" for j in range(p)]:
            raise ParseError("header must start t1,...,tp", f"{path}: line 1")
        if x_cols and [header[i] for i in x_cols] != [f"x{j + 1}" for j in range(len(x_cols))]:
            raise ParseError("covariate columns must be x1,...,xq", f"{path}: line 1")
        if len(t_cols) + len(x_cols) != len(header):
            raise ParseError("unexpected column in header", f"{path}: line 1")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", f"{path}: line {lineno}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ParseError(str(exc), f"{path}: line {lineno}") from None
    if not rows:
        raise ParseError("no data rows", str(path))
    M = np.array(rows)
    X = M[:, x_cols] if x_cols else None
    return Dataset(M[:, t_cols], covariates=X)


def read_matrix(path) -> np.ndarray:
    """A numeric matrix from CSV; a non-numeric first row is taken as a header."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ParseError("empty matrix file", str(path))
    out = []
    for lineno, row in enumerate(rows, start=1):
        try:
            out.append([float(c) for c in row])
        except ValueError as exc:
            if lineno == 1:
                continue
            raise ParseError(str(exc), f"{path}: line {lineno}") from None
    widths = {len(r) for r in out}
    if len(widths) != 1:
        raise ParseError("rows have different lengths", str(path))
    return np.array(out)
