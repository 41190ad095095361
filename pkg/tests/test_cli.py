import json

import pytest

from physiomtl.cli import load_config_file, main, _parse_grid


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "syn"
    assert main(["synth-bench", "--out", str(out), "--seed", "1"]) == 0
    return out


def test_parse_grid():
    assert _parse_grid("20:40:5") == [20.0, 25.0, 30.0, 35.0, 40.0]
    assert _parse_grid("1,2.5") == [1.0, 2.5]


def test_config_file_formats(tmp_path):
    kv = tmp_path / "c.txt"
    kv.write_text("alpha = 0.5  # comment\nmap_kind = linear\n")
    assert load_config_file(kv) == {"alpha": 0.5, "map_kind": "linear"}
    js = tmp_path / "c.json"
    js.write_text('{"gamma": 0.2}')
    assert load_config_file(js) == {"gamma": 0.2}


def test_fit_predict_counterfactual(synth_dir, tmp_path):
    tasks, feats = str(synth_dir / "tasks.csv"), str(synth_dir / "features.csv")
    fitted = tmp_path / "fit"
    assert main(["fit", tasks, feats, "--map", "linear", "--alpha", "0.2", "--out", str(fitted)]) == 0
    model = json.loads((fitted / "model.json").read_text())
    assert model["config"]["alpha"] == 0.2
    trace = (fitted / "trace.csv").read_text().splitlines()
    assert trace[0] == "iteration,objective" and len(trace) == len(model["objective_trace"]) + 1

    pred = tmp_path / "pred.csv"
    assert main(["predict", str(fitted / "model.json"), feats, "--tasks", tasks, "--out", str(pred)]) == 0
    assert len(pred.read_text().splitlines()) == len(open(tasks).read().splitlines())

    cf = tmp_path / "cf.csv"
    assert main(["counterfactual", str(fitted / "model.json"), "--dim", "s", "--grid", "0:4:2",
                 "--times", "0,12", "--out", str(cf)]) == 0
    lines = cf.read_text().splitlines()
    assert lines[0] == "label,time_hours,hrv_ms" and len(lines) == 1 + 4 * 2


def test_config_flags_override_file(synth_dir, tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("alpha=0.7\nmap_kind=linear\n")
    out = tmp_path / "fit"
    assert main(["fit", str(synth_dir / "tasks.csv"), str(synth_dir / "features.csv"),
                 "--config", str(cfg), "--alpha", "0.3", "--out", str(out)]) == 0
    model = json.loads((out / "model.json").read_text())
    assert model["config"]["alpha"] == 0.3 and model["config"]["map_kind"] == "linear"


def test_evaluate_is_byte_reproducible(synth_dir, tmp_path):
    args = ["evaluate", str(synth_dir / "tasks.csv"), str(synth_dir / "features.csv"),
            "--methods", "global-average,knn-transfer,physiomtl-linear",
            "--fraction", "0.6", "--repeats", "3", "--seed", "4"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.with_suffix(".json").read_bytes() == b.with_suffix(".json").read_bytes()
    assert len(a.read_text().splitlines()) == 1 + 3


def test_ingest_mmash_command(mmash_root, tmp_path):
    out = tmp_path / "ing"
    assert main(["ingest-mmash", str(mmash_root), "--out", str(out)]) == 0
    header = (out / "features.csv").read_text().splitlines()[0]
    assert header == "task_id,age,bmi,activity,sleep,stress"
    assert json.loads((out / "ingest_report.json").read_text())["n_tasks"] == 21


def test_exit_codes(synth_dir, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["fit"])
    assert exc.value.code == 1
    assert main(["fit", str(tmp_path / "missing.csv"), str(synth_dir / "features.csv"),
                 "--out", str(tmp_path / "x")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("task_id,time_hours,hrv_ms\na,1.0,oops\n")
    assert main(["fit", str(bad), str(synth_dir / "features.csv"), "--out", str(tmp_path / "x")]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["ingest-mmash", str(tmp_path / "nowhere"), "--out", str(tmp_path / "y")]) == 2
    assert main(["counterfactual", str(tmp_path / "m.json"), "--dim", "s", "--grid", "5:1:1",
                 "--out", str(tmp_path / "c.csv")]) == 2  # model file missing is a data error


def test_numerical_failure_exit_code(synth_dir, tmp_path, monkeypatch):
    from physiomtl import cli
    from physiomtl.errors import DivergedSolve

    def boom(*args, **kwargs):
        raise DivergedSolve("objective became nan", 3)

    monkeypatch.setattr(cli, "fit", boom)
    assert main(["fit", str(synth_dir / "tasks.csv"), str(synth_dir / "features.csv"),
                 "--out", str(tmp_path / "x")]) == 3
