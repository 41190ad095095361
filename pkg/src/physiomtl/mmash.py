"""MMASH ingestion: inter-beat intervals to windowed RMSSD, plus per-subject task features.

Expected layout (PhysioNet distribution)::

    <root>/[DataPaper/]user_<n>/RR.csv
                               /user_info.csv
                               /Activity.csv
                               /sleep.csv
                               /questionnaire.csv

``RR.csv`` holds ``ibi_s``, ``day`` and ``time`` columns; inter-beat intervals
are in seconds and are converted to milliseconds here.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IngestError, InsufficientData, InvalidInput
from .rhythm import TaskRecord

logger = logging.getLogger(__name__)

FEATURE_NAMES = ("age", "bmi", "activity", "sleep", "stress")
DEFAULT_EXCLUSIONS = (4,)
DEFAULT_IMPUTATION = {11: ("sleep",), 18: ("age",)}
WINDOW_MINUTES = 5.0
Z_THRESHOLD = 2.5
# diary codes for medium and heavy physical activity
ACTIVITY_CODES = {"5": "medium", "6": "heavy"}
ACTIVITY_NAMES = {"medium", "heavy"}

_USER_DIR = re.compile(r"^user_(\d+)$")


@dataclass
class BeatSeries:
    subject_id: str
    times: np.ndarray  # beat timestamps, hours since day-1 midnight
    ibis: np.ndarray  # ms

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).ravel()
        self.ibis = np.asarray(self.ibis, dtype=float).ravel()
        if self.times.size != self.ibis.size:
            raise InvalidInput(f"{self.subject_id}: {self.times.size} timestamps vs {self.ibis.size} intervals")
        if not (np.all(np.isfinite(self.ibis)) and np.all(self.ibis > 0)):
            raise InvalidInput(f"{self.subject_id}: inter-beat intervals must be positive and finite")
        if np.any(np.diff(self.times) < 0):
            raise InvalidInput(f"{self.subject_id}: beat timestamps must be non-decreasing")


@dataclass
class SubjectProfile:
    age: float | None = None
    height: float | None = None
    weight: float | None = None
    activity_hours: float | None = None
    sleep_hours: float | None = None
    stress_dsi: float | None = None

    @property
    def bmi(self) -> float | None:
        if self.height and self.weight is not None and self.height > 0:
            return self.weight / (self.height / 100.0) ** 2
        return None

    def feature_values(self) -> dict[str, float | None]:
        return {
            "age": self.age,
            "bmi": self.bmi,
            "activity": self.activity_hours,
            "sleep": self.sleep_hours,
            "stress": self.stress_dsi,
        }


def rmssd(ibis) -> float:
    """Root mean square of successive interval differences."""
    ibis = np.asarray(ibis, dtype=float).ravel()
    if ibis.size < 2:
        raise InsufficientData(f"RMSSD needs at least 2 intervals, got {ibis.size}")
    return float(np.sqrt(np.mean(np.diff(ibis) ** 2)))


@dataclass
class WindowedRmssd:
    times: np.ndarray  # window midpoints, hours
    values: np.ndarray  # RMSSD, ms
    n_windows: int
    n_skipped: int


def window_rmssd(series: BeatSeries, window_minutes: float = WINDOW_MINUTES) -> WindowedRmssd:
    """RMSSD over contiguous windows aligned to the first beat.

    Windows holding fewer than two beats are skipped and counted.
    """
    if not window_minutes > 0:
        raise InvalidInput(f"window must be positive, got {window_minutes}")
    if series.times.size == 0:
        return WindowedRmssd(np.zeros(0), np.zeros(0), 0, 0)
    width = window_minutes / 60.0
    start = series.times[0]
    idx = np.floor((series.times - start) / width).astype(int)
    n_windows = int(idx[-1]) + 1
    mids, vals = [], []
    bounds = np.searchsorted(idx, np.arange(n_windows + 1), side="left")
    for w in range(n_windows):
        lo, hi = bounds[w], bounds[w + 1]
        if hi - lo < 2:
            continue
        # the last window may extend past the final beat
        mids.append(min(start + (w + 0.5) * width, series.times[-1]))
        vals.append(rmssd(series.ibis[lo:hi]))
    return WindowedRmssd(np.array(mids), np.array(vals), n_windows, n_windows - len(vals))


def zscore_filter(values, threshold: float = Z_THRESHOLD):
    """Drop entries whose z-score exceeds ``threshold`` (single pass).

    Returns ``(kept_values, removed_indices)``. Zero variance removes nothing.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size < 2:
        raise InvalidInput(f"z-score filter needs at least 2 values, got {values.size}")
    std = values.std()
    if std == 0 or math.isinf(threshold):
        return values.copy(), np.zeros(0, dtype=int)
    z = np.abs(values - values.mean()) / std
    removed = np.flatnonzero(z > threshold)
    return np.delete(values, removed), removed


# CSV parsing


def _read_rows(path: Path, subject):
    """Header and data rows of a CSV as (line_number, dict) pairs."""
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                return [], []
            header = [h.strip() for h in header]
            rows = []
            for row in reader:
                if not any(cell.strip() for cell in row):
                    continue
                rows.append((reader.line_num, dict(zip(header, (c.strip() for c in row)))))
            return header, rows
    except OSError as exc:
        raise IngestError(f"cannot read file ({exc.strerror})", subject, str(path)) from None


def _require(header, column, path, subject):
    if column not in header:
        raise IngestError(f"missing column {column!r}", subject, str(path))


def _float(cell, path, subject, line, column):
    if cell is None or cell == "":
        return None
    try:
        value = float(cell)
    except ValueError:
        raise IngestError(f"unparseable {column} value {cell!r}", subject, str(path), line) from None
    return value if math.isfinite(value) else None


def _clock_hours(cell, path, subject, line):
    parts = cell.split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        nums = []
    if not 2 <= len(nums) <= 3:
        raise IngestError(f"unparseable clock time {cell!r}", subject, str(path), line)
    h, m = nums[0], nums[1]
    s = nums[2] if len(nums) == 3 else 0.0
    return h + m / 60.0 + s / 3600.0


def read_rr(path: Path, subject) -> BeatSeries:
    header, rows = _read_rows(path, subject)
    for col in ("ibi_s", "day", "time"):
        _require(header, col, path, subject)
    times, ibis = [], []
    for line, row in rows:
        ibi = _float(row.get("ibi_s"), path, subject, line, "ibi_s")
        day = _float(row.get("day"), path, subject, line, "day")
        if ibi is None or day is None or not row.get("time"):
            raise IngestError("incomplete RR row", subject, str(path), line)
        if ibi <= 0:
            raise IngestError(f"nonpositive inter-beat interval {ibi}", subject, str(path), line)
        times.append((day - 1) * 24.0 + _clock_hours(row["time"], path, subject, line))
        ibis.append(ibi * 1000.0)
    times = np.array(times)
    order = np.argsort(times, kind="stable")
    return BeatSeries(subject, times[order], np.array(ibis)[order])


def read_user_info(path: Path, subject) -> tuple[float | None, float | None, float | None]:
    header, rows = _read_rows(path, subject)
    for col in ("Weight", "Height", "Age"):
        _require(header, col, path, subject)
    if not rows:
        raise IngestError("no data rows", subject, str(path))
    line, row = rows[0]
    age = _float(row.get("Age"), path, subject, line, "Age")
    height = _float(row.get("Height"), path, subject, line, "Height")
    weight = _float(row.get("Weight"), path, subject, line, "Weight")
    # a zero entry marks a missing value in the distribution
    return (age or None), (height or None), (weight or None)


def read_activity_hours(path: Path, subject) -> float:
    header, rows = _read_rows(path, subject)
    for col in ("Activity", "Start", "End"):
        _require(header, col, path, subject)
    total = 0.0
    for line, row in rows:
        code = row.get("Activity", "")
        code = code[:-2] if code.endswith(".0") else code
        if code not in ACTIVITY_CODES and code.lower() not in ACTIVITY_NAMES:
            continue
        if not row.get("Start") or not row.get("End"):
            raise IngestError("activity row without start/end", subject, str(path), line)
        start = _clock_hours(row["Start"], path, subject, line)
        end = _clock_hours(row["End"], path, subject, line)
        if end < start:
            end += 24.0
        total += end - start
    return total


def read_sleep_hours(path: Path, subject) -> float | None:
    header, rows = _read_rows(path, subject)
    if not rows:
        return None
    _require(header, "Total Minutes in Bed", path, subject)
    minutes = [_float(r.get("Total Minutes in Bed"), path, subject, line, "Total Minutes in Bed")
               for line, r in rows]
    minutes = [m for m in minutes if m is not None]
    return sum(minutes) / 60.0 if minutes else None


def read_stress(path: Path, subject) -> float | None:
    header, rows = _read_rows(path, subject)
    _require(header, "Daily_stress", path, subject)
    if not rows:
        return None
    line, row = rows[0]
    return _float(row.get("Daily_stress"), path, subject, line, "Daily_stress")


def find_subject_dirs(root) -> dict[int, Path]:
    root = Path(root)
    if not root.is_dir():
        raise IngestError("MMASH root is not a directory", path=str(root))
    for base in (root, root / "DataPaper"):
        if base.is_dir():
            found = {
                int(m.group(1)): p
                for p in base.iterdir()
                if p.is_dir() and (m := _USER_DIR.match(p.name))
            }
            if found:
                return dict(sorted(found.items()))
    raise IngestError("no user_<n> subject directories found", path=str(root))


@dataclass
class IngestResult:
    tasks: list[TaskRecord]
    feature_names: list[str]
    report: dict = field(default_factory=dict)


def _subject_profile(folder: Path, subject) -> SubjectProfile:
    def need(name):
        path = folder / name
        if not path.is_file():
            raise IngestError("missing required file", subject, str(path))
        return path

    age, height, weight = read_user_info(need("user_info.csv"), subject)
    sleep_path = folder / "sleep.csv"
    sleep = read_sleep_hours(sleep_path, subject) if sleep_path.is_file() else None
    return SubjectProfile(
        age=age,
        height=height,
        weight=weight,
        activity_hours=read_activity_hours(need("Activity.csv"), subject),
        sleep_hours=sleep,
        stress_dsi=read_stress(need("questionnaire.csv"), subject),
    )


def ingest_mmash(
    root,
    exclusions=DEFAULT_EXCLUSIONS,
    imputation=None,
    window_minutes: float = WINDOW_MINUTES,
    z_threshold: float = Z_THRESHOLD,
    period_hours: float = 24.0,
) -> IngestResult:
    """Build one task per included subject with the five-feature vector.

    Features missing for a subject listed in ``imputation`` are replaced by
    the mean over included subjects; any other missing feature or file is an
    :class:`IngestError`.
    """
    imputation = DEFAULT_IMPUTATION if imputation is None else imputation
    exclusions = {int(e) for e in exclusions}
    dirs = find_subject_dirs(root)
    report = {
        "subjects_found": sorted(dirs),
        "excluded": sorted(exclusions & set(dirs)),
        "window_minutes": window_minutes,
        "z_threshold": z_threshold,
        "subjects": {},
        "imputed": {},
    }
    series: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    profiles: dict[int, dict[str, float | None]] = {}
    for num, folder in dirs.items():
        name = folder.name
        rr_path = folder / "RR.csv"
        if not rr_path.is_file():
            raise IngestError("missing required file", name, str(rr_path))
        win = window_rmssd(read_rr(rr_path, name), window_minutes)
        entry = {"n_windows": win.n_windows, "n_skipped": win.n_skipped}
        if win.values.size >= 2:
            kept, removed = zscore_filter(win.values, z_threshold)
            times = np.delete(win.times, removed)
        else:
            kept, removed, times = win.values, np.zeros(0, dtype=int), win.times
        entry.update(
            n_outliers=int(removed.size),
            n_kept=int(kept.size),
            mean_rmssd=float(win.values.mean()) if win.values.size else None,
        )
        report["subjects"][name] = entry
        if num in exclusions:
            continue
        if kept.size == 0:
            raise IngestError("no RMSSD windows left after filtering", name, str(rr_path))
        series[num] = (np.mod(times, period_hours), kept)
        profiles[num] = _subject_profile(folder, name).feature_values()

    for feat in FEATURE_NAMES:
        present = [p[feat] for p in profiles.values() if p[feat] is not None]
        for num, prof in profiles.items():
            if prof[feat] is not None:
                continue
            if feat not in imputation.get(num, ()):
                raise IngestError(f"missing {feat} and no imputation allowed", dirs[num].name)
            if not present:
                raise IngestError(f"cannot impute {feat}: no subject provides it")
            prof[feat] = float(np.mean(present))
            report["imputed"].setdefault(dirs[num].name, {})[feat] = prof[feat]

    tasks = [
        TaskRecord(dirs[num].name, t, v, np.array([profiles[num][f] for f in FEATURE_NAMES]))
        for num, (t, v) in series.items()
    ]
    report["n_tasks"] = len(tasks)
    logger.info("ingested %d MMASH subjects (%d excluded)", len(tasks), len(report["excluded"]))
    return IngestResult(tasks, list(FEATURE_NAMES), report)


def load_mmash(root, exclusions=DEFAULT_EXCLUSIONS, imputation=None) -> list[TaskRecord]:
    return ingest_mmash(root, exclusions, imputation).tasks
