"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line."""

import json
import math
import time

import numpy as np

from mania_pipe import nnet
from mania_pipe.corpus import Split
from mania_pipe.evaluation import ExperimentSpec, PipelineParams, build_table, run_experiment
from mania_pipe.features import FeatureTable, ExtractionConfig, utterance_features, znorm_apply, znorm_fit
from mania_pipe.functionals import FunctionalSet, apply_functionals, expected_dimension
from mania_pipe.lld import LldMatrix, LldSet, extract_lld, frame_signal, mel_filterbank
from mania_pipe.nnet import CnnConfig, TrainConfig, cross_entropy, train
from mania_pipe.selection import rfe
import gradcheck
from oracles import functionals as functional_oracle
from signals import pulse_vowel, sine
from test_lld import direct_dct2_ortho
from test_selection import planted

LABELS = ["Remission", "Hypomania", "Mania"]


def test_1_dsp_oracles(verdict):
    t0 = time.perf_counter()
    buf = pulse_vowel(180.0, dur_s=0.3)
    m = extract_lld(buf)
    power = np.abs(np.fft.rfft(frame_signal(buf), 512, axis=1)) ** 2 / 512
    log_mel = np.log(np.maximum(power @ mel_filterbank(26, 512, 16000).T, 1e-10))
    mfcc = np.column_stack([m.column(f"mfcc{i}") for i in range(15)])
    dct_err = max(np.max(np.abs(mfcc[t] - direct_dct2_ortho(log_mel[t])[:15])) for t in range(len(mfcc)))

    centroid = float(np.median(extract_lld(sine(1000.0)).column("spectral_centroid")))
    f0 = extract_lld(pulse_vowel(220.0)).column("f0")
    f0_med = float(np.median(f0[f0 > 0]))
    elapsed = time.perf_counter() - t0

    ok = dct_err <= 1e-9 and abs(centroid - 1000.0) <= 16000 / 512 and 215 <= f0_med <= 225 and elapsed < 10
    assert verdict("1 DSP oracles", ok,
                   f"DCT err {dct_err:.2e}, centroid {centroid:.1f} Hz, median F0 {f0_med:.2f} Hz, {elapsed:.1f}s")


def test_2_functionals_brute_force(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        frames, cols = int(rng.integers(2, 80)), int(rng.integers(1, 5))
        x = rng.standard_normal((frames, cols)) * rng.uniform(0.1, 20) + rng.uniform(-5, 5)
        v = apply_functionals(LldMatrix(x, [f"c{j}" for j in range(cols)]))
        got = dict(zip(v.names, v.values))
        for j in range(cols):
            for k, want in functional_oracle(x[:, j].tolist()).items():
                worst = max(worst, abs(got[f"c{j}_{k}"] - want))
    elapsed = time.perf_counter() - t0
    assert verdict("2 functionals brute force", worst <= 1e-9 and elapsed < 5,
                   f"max abs err {worst:.2e} over 100 matrices x 21 functionals, {elapsed:.2f}s")


def test_3_dimension_accounting(verdict):
    nominal = expected_dimension(34, True, 21, 154)
    cfg = ExtractionConfig()
    actual = len(utterance_features(pulse_vowel(dur_s=0.5), cfg).values)
    own = expected_dimension(len(LldSet().enabled), True, FunctionalSet())
    assert verdict("3 dimension accounting", nominal == 1582 and actual == own == cfg.dimension,
                   f"nominal {nominal}, extractor {actual}, own accounting {own}")


def test_4_normalization(verdict, default_corpus, default_features):
    tr = build_table(default_corpus, default_features, Split.TRAIN)
    dv = build_table(default_corpus, default_features, Split.DEV)
    p = znorm_fit(tr)
    Z = znorm_apply(tr, p).X
    varying = p.stddev > 1e-8
    mean_err = float(np.max(np.abs(Z.mean(axis=0))))
    std_err = float(np.max(np.abs(Z.std(axis=0)[varying] - 1.0)))
    both = FeatureTable(np.vstack([tr.X, dv.X]), tr.labels + dv.labels, tr.names)
    leak_guard = not np.allclose(znorm_fit(both).mean, p.mean)
    ok = mean_err < 1e-9 and std_err <= 1e-9 and leak_guard
    assert verdict("4 normalization", ok,
                   f"max |mean| {mean_err:.1e}, max |std-1| {std_err:.1e}, train-only fit differs from "
                   f"train+dev fit: {leak_guard}")


def test_5_selection(verdict):
    recovered = [len(set(rfe(planted(s), target_k=10, seed=s).selected) & set(range(10))) for s in range(5)]
    rng = np.random.default_rng(5)
    table = FeatureTable(rng.standard_normal((45, 1582)), [LABELS[i % 3] for i in range(45)],
                         [f"f{j}" for j in range(1582)])
    t0 = time.perf_counter()
    mask = rfe(table, target_k=100)
    elapsed = time.perf_counter() - t0
    ok = min(recovered) >= 9 and len(mask) == 100 and elapsed < 60
    assert verdict("5 selection", ok,
                   f"informative dims recovered per seed {recovered}; RFE 1582 -> {len(mask)} in "
                   f"{len(mask.elimination_trace)} rounds, {elapsed:.1f}s")


def _replay(monkeypatch, losses, tcfg):
    seq = iter(losses)
    monkeypatch.setattr(nnet, "_dev_metrics", lambda model, X, y: (next(seq), 0.5))
    rng = np.random.default_rng(0)
    t = FeatureTable(rng.standard_normal((8, 20)), [LABELS[i % 3] for i in range(8)],
                     [f"f{j}" for j in range(20)])
    _, hist = train(t, t, CnnConfig(input_dim=20), tcfg)
    return hist.stopped_epoch, hist.best_epoch


def test_6_neural_net(verdict, monkeypatch):
    configs = {"default": CnnConfig(), "flatten": CnnConfig(input_dim=24, pooling="flatten", dropout_p=0.0)}
    worst, seeds = 0.0, {}
    for name, cfg in configs.items():
        seeds[name], errors = gradcheck.check(cfg, eps=1e-4)
        worst = max(worst, max(errors.values()))

    ce_err = abs(cross_entropy(np.full((6, 3), 1 / 3), np.array([0, 1, 2, 0, 1, 2])) - math.log(3))

    cases = {
        "5 rises": (_replay(monkeypatch, [1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 0.1], TrainConfig(max_epochs=20)), (6, 1)),
        "patience 1": (_replay(monkeypatch, [0.5, 0.6, 0.7], TrainConfig(max_epochs=10, patience=1)), (2, 1)),
        "cumulative": (_replay(monkeypatch, [1.0, 0.9, 1.1, 0.8, 0.95, 0.85, 0.9, 0.81, 0.82],
                               TrainConfig(max_epochs=10)), (8, 4)),
        "ties": (_replay(monkeypatch, [0.5] * 4, TrainConfig(max_epochs=4, patience=1)), (4, 1)),
    }
    replay_ok = all(got == want for got, want in cases.values())
    ok = worst < 1e-3 and ce_err <= 1e-9 and replay_ok
    assert verdict("6 neural net", ok,
                   f"max grad rel err {worst:.2e} (kink-free point seeds {seeds}), |CE(uniform)-ln3| {ce_err:.1e}, replay "
                   + ", ".join(f"{k}={v[0]}" for k, v in cases.items()))


def test_7_end_to_end(verdict, default_corpus, default_features, cli_runs):
    res = run_experiment(ExperimentSpec((6, 7)), default_corpus, default_features)
    shuffled = [run_experiment(ExperimentSpec((6, 7), params=PipelineParams(seed=s), shuffle_labels=True),
                               default_corpus, default_features).uar for s in range(5)]
    null_mean = float(np.mean(shuffled))
    _, times = cli_runs
    ok = res.uar >= 0.90 and 0.20 <= null_mean <= 0.47 and max(times) < 300
    assert verdict("7 end to end", ok,
                   f"tasks 6-7 dev UAR {res.uar:.3f}; label-shuffled UAR per seed "
                   f"{[round(u, 3) for u in shuffled]} mean {null_mean:.3f}; "
                   f"synth+experiment+report {max(times):.0f}s")


def test_8_determinism(verdict, cli_runs):
    (a, b), _ = cli_runs
    ra, rb = (a / "experiment" / "rows.json").read_bytes(), (b / "experiment" / "rows.json").read_bytes()
    ok = ra == rb and len(json.loads(ra)) == 10
    assert verdict("8 determinism", ok, f"rows.json byte-identical across two runs: {ra == rb}")
