import json

import pytest

from mania_pipe.cli import RunConfig, main
from mania_pipe.corpus import load_manifest
from mania_pipe.features import load_table
from mania_pipe.selection import SelectionMask


def test_full_run_has_ten_rows(cli_runs):
    (a, _), _ = cli_runs
    rows = json.loads((a / "experiment" / "rows.json").read_text())
    assert len(rows) == 10
    assert (a / "report" / "report.txt").is_file()
    assert (a / "report" / "uar_by_task.svg").is_file()
    assert len(list((a / "report").glob("cm_*.svg"))) == 20


def test_two_runs_identical_rows(cli_runs):
    (a, b), _ = cli_runs
    assert (a / "experiment" / "rows.json").read_bytes() == (b / "experiment" / "rows.json").read_bytes()


def test_config_echo_everywhere(cli_runs):
    (a, _), _ = cli_runs
    for d in (a, a / "synth", a / "experiment", a / "report"):
        assert (d / "config.echo.json").is_file(), d
    echo = json.loads((a / "config.echo.json").read_text())
    assert json.loads(json.dumps(RunConfig.from_dict(echo).to_dict())) == echo


def test_echo_reproduces_the_corpus(cli_runs, tmp_path):
    (a, _), _ = cli_runs
    assert main(["synth", "--config", str(a / "config.echo.json"), "--out", str(tmp_path)]) == 0
    for wav in (a / "synth" / "wavs").glob("*.wav"):
        assert (tmp_path / "synth" / "wavs" / wav.name).read_bytes() == wav.read_bytes()


def test_extract_before_segment(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path)]) == 0
    assert main(["extract", "--out", str(tmp_path)]) == 3
    err = capsys.readouterr().err
    assert "extract" in err and "segment" in err


def test_stage_outputs_are_append_only(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path)]) == 0
    before = (tmp_path / "synth" / "manifest.json").read_bytes()
    assert main(["synth", "--out", str(tmp_path)]) == 3
    assert "append-only" in capsys.readouterr().err
    assert (tmp_path / "synth" / "manifest.json").read_bytes() == before


def test_usage_errors():
    assert main([]) == 2
    assert main(["synth", "--tasks", "0,9"]) == 2
    assert main(["fly"]) == 2


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"no_such_key": 1}))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 3
    cfg.write_text("{not json")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 3
    assert main(["synth", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "r")]) == 3


@pytest.fixture(scope="module")
def staged_run(tmp_path_factory):
    """Small corpus pushed through every individual stage."""
    out = tmp_path_factory.mktemp("staged")
    cfg = RunConfig()
    cfg.synth.n_per_class_per_split = {"Train": 2, "Dev": 2, "Test": 1}
    cfg.synth.task_durations_s = [1.0] * 7
    cfg.target_k = 20
    path = out / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    for cmd in ("synth", "segment", "extract", "select", "train", "eval"):
        assert main([cmd, "--config", str(path), "--out", str(out / "run")]) == 0, cmd
    return out / "run"


def test_stage_artifacts(staged_run):
    m = load_manifest(staged_run / "segment" / "manifest.json")
    segs = load_table(staged_run / "extract" / "features_segments.csv")
    assert len(segs) == len(m.segments) == 15 * 7
    assert len(load_table(staged_run / "extract" / "features_whole.csv")) == 15
    summary = json.loads((staged_run / "segment" / "summary.json").read_text())
    assert summary["agree_within_50ms"] == summary["segments"]
    sel = staged_run / "select" / "tasks-6-7"
    assert len(SelectionMask.from_json(sel / "mask.json")) == 20
    assert load_table(sel / "dev.csv").dim == 20
    assert (staged_run / "train" / "tasks-6-7" / "model.json").is_file()
    assert (staged_run / "train" / "tasks-6-7" / "history.csv").is_file()
    result = json.loads((staged_run / "eval" / "tasks-6-7-same" / "eval.json").read_text())
    assert 0.0 <= result["uar"] <= 1.0
    assert sum(map(sum, result["confusion"])) == 6 * 2


def test_eval_without_training(tmp_path):
    assert main(["eval", "--out", str(tmp_path)]) == 3
