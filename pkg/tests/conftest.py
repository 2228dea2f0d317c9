from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from mania_pipe.audio import AudioBuffer, write_wav
from mania_pipe.corpus import SynthConfig, generate_synthetic_corpus
from mania_pipe.evaluation import extract_corpus_features

settings.register_profile("repo", deadline=None, max_examples=40)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def default_corpus(tmp_path_factory):
    """Default-config synthetic corpus (5 per class per split), generated once."""
    out = tmp_path_factory.mktemp("corpus")
    return generate_synthetic_corpus(SynthConfig(), out)


@pytest.fixture(scope="session")
def default_features(default_corpus):
    return extract_corpus_features(default_corpus)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """One recording per class per split with shortened tasks."""
    out = tmp_path_factory.mktemp("small")
    cfg = SynthConfig(n_per_class_per_split={"Train": 1, "Dev": 1, "Test": 1},
                      task_durations_s=[1.0] * 7)
    return generate_synthetic_corpus(cfg, out)


@pytest.fixture
def wav_writer(tmp_path):
    def _write(samples, sr=16000, name="x.wav"):
        p = tmp_path / name
        write_wav(p, AudioBuffer(np.asarray(samples, dtype=np.float64), sr))
        return p
    return _write


@pytest.fixture(scope="session")
def cli_runs(tmp_path_factory):
    """Two independent synth -> experiment -> report runs on default settings.

    Returns the run directories and the wall-clock seconds each took.
    """
    import time

    from mania_pipe.cli import main

    runs, times = [], []
    for name in ("run_a", "run_b"):
        out = tmp_path_factory.mktemp(name)
        t0 = time.perf_counter()
        for cmd in ("synth", "experiment", "report"):
            assert main([cmd, "--out", str(out)]) == 0, cmd
        times.append(time.perf_counter() - t0)
        runs.append(out)
    return runs, times


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""
    def _record(criterion: str, ok: bool, detail: str = "") -> bool:
        _VERDICTS.append(f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}")
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
