"""Canonical CSV and JSON formats.

tasks CSV:    task_id,time_hours,hrv_ms       (one row per observation)
features CSV: task_id,<feature names...>      (one row per task)
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from .errors import InvalidInput
from .rhythm import DEFAULT_PERIOD, TaskRecord

TASK_COLUMNS = ("task_id", "time_hours", "hrv_ms")


class SchemaError(InvalidInput):
    """A CSV does not follow the canonical schema."""

    def __init__(self, message, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_tasks_csv(tasks, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TASK_COLUMNS)
        for t in tasks:
            for tau, v in zip(t.times, t.values):
                w.writerow([t.task_id, _fmt(tau), _fmt(v)])


def write_features_csv(tasks, feature_names, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task_id", *feature_names])
        for t in tasks:
            if t.features.size != len(feature_names):
                raise InvalidInput(f"task {t.task_id!r} has {t.features.size} features, schema {len(feature_names)}")
            w.writerow([t.task_id, *(_fmt(v) for v in t.features)])


def _parse_float(cell, path, line, column):
    try:
        value = float(cell)
    except (TypeError, ValueError):
        raise SchemaError(f"cannot parse {cell!r} as a number", path, line, column) from None
    if not math.isfinite(value):
        raise SchemaError(f"non-finite value {cell!r}", path, line, column)
    return value


def _open_csv(path):
    path = Path(path)
    if not path.is_file():
        raise SchemaError("file not found", path)
    return path


def read_features_csv(path) -> tuple[dict[str, np.ndarray], list[str]]:
    path = _open_csv(path)
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "task_id":
            raise SchemaError("first column must be 'task_id'", path, 1, "task_id")
        names = [h.strip() for h in header[1:]]
        if not names:
            raise SchemaError("no feature columns", path, 1)
        feats: dict[str, np.ndarray] = {}
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != len(header):
                raise SchemaError(f"expected {len(header)} fields, got {len(row)}", path, line)
            tid = row[0].strip()
            if tid in feats:
                raise SchemaError(f"duplicate task_id {tid!r}", path, line, "task_id")
            feats[tid] = np.array([_parse_float(c, path, line, n) for c, n in zip(row[1:], names)])
    return feats, names


def read_tasks_csv(path, period_hours: float = DEFAULT_PERIOD) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Observations grouped by task id, in first-appearance order.

    Times are folded into ``[0, period_hours)``.
    """
    path = _open_csv(path)
    times: dict[str, list[float]] = defaultdict(list)
    values: dict[str, list[float]] = defaultdict(list)
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in (next(reader, None) or [])]
        for col in TASK_COLUMNS:
            if col not in header:
                raise SchemaError("missing required column", path, 1, col)
        pos = {c: header.index(c) for c in TASK_COLUMNS}
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != len(header):
                raise SchemaError(f"expected {len(header)} fields, got {len(row)}", path, line)
            tid = row[pos["task_id"]].strip()
            if not tid:
                raise SchemaError("empty task_id", path, line, "task_id")
            times[tid].append(_parse_float(row[pos["time_hours"]], path, line, "time_hours"))
            values[tid].append(_parse_float(row[pos["hrv_ms"]], path, line, "hrv_ms"))
    return {tid: (np.mod(np.array(times[tid]), period_hours), np.array(values[tid])) for tid in times}


def read_dataset(tasks_csv, features_csv, period_hours: float = DEFAULT_PERIOD):
    """Join the two canonical CSVs into task records and the feature schema."""
    obs = read_tasks_csv(tasks_csv, period_hours)
    feats, names = read_features_csv(features_csv)
    missing = [tid for tid in obs if tid not in feats]
    if missing:
        raise SchemaError(f"tasks without a features row: {missing[:5]}", features_csv, column="task_id")
    tasks = [TaskRecord(tid, t, v, feats[tid]) for tid, (t, v) in obs.items()]
    return tasks, names


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise InvalidInput(f"{path}: file not found")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def write_rows_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
