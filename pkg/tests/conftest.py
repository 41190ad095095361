import csv
import sys
from pathlib import Path

import numpy as np
import pytest

from physiomtl.rhythm import TaskRecord
from physiomtl.synth import SynthConfig, generate_tasks

N_SUBJECTS = 22


def random_tasks(rng, T, n_range=(4, 10), d=2, period=24.0):
    tasks = []
    for t in range(T):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        times = rng.uniform(0, period, n)
        values = 60 + 10 * rng.standard_normal(n)
        tasks.append(TaskRecord(f"t{t}", times, values, rng.normal(size=d)))
    return tasks


@pytest.fixture
def synth_tasks():
    return generate_tasks(SynthConfig(n_train=10, n_test=5, seed=3))


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _clock(hours):
    h = int(hours)
    m = int((hours - h) * 60)
    s = (hours - h) * 3600 - m * 60
    return f"{h:02d}:{m:02d}:{s:06.3f}"


def make_mmash_tree(root: Path, n_subjects=N_SUBJECTS) -> Path:
    """Small MMASH-shaped tree: subject 11 lacks sleep.csv, subject 18 lacks age."""
    base = root / "DataPaper"
    rng = np.random.default_rng(7)
    for u in range(1, n_subjects + 1):
        d = base / f"user_{u}"
        d.mkdir(parents=True)
        rows = []
        # three 20-minute recordings spread over the day
        for start in (2.0, 10.0, 18.0):
            t = start
            while t < start + 1 / 3:
                ibi = 0.8 + 0.02 * np.sin(t * 7 * u) + 0.01 * rng.standard_normal()
                rows.append([f"{ibi:.4f}", 1, _clock(t)])
                t += ibi / 3600.0
        _write(d / "RR.csv", ["", "ibi_s", "day", "time"], [[i, *r] for i, r in enumerate(rows)])
        age = 0 if u == 18 else 20 + u % 7
        _write(d / "user_info.csv", ["", "Gender", "Weight", "Height", "Age"],
               [[0, "M", 60 + u, 170 + u % 5, age]])
        _write(d / "Activity.csv", ["", "Activity", "Start", "End", "Day"],
               [[0, 5, "09:00", "10:30", 1], [1, 1, "12:00", "13:00", 1], [2, 6, "23:30", "00:30", 1]])
        if u != 11:
            _write(d / "sleep.csv", ["", "In Bed Date", "Total Minutes in Bed"], [[0, 1, 400 + u]])
        _write(d / "questionnaire.csv", ["", "MEQ", "Daily_stress"], [[0, 50, 20 + u]])
    return root


@pytest.fixture(scope="session")
def mmash_root(tmp_path_factory):
    return make_mmash_tree(tmp_path_factory.mktemp("mmash"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[n]
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
