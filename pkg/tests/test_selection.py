import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import mannwhitneyu

from mania_pipe.errors import DimensionMismatch, SingleClass, TargetTooLarge
from mania_pipe.features import FeatureTable
from mania_pipe.selection import (
    NotNormalizedWarning,
    SelectionMask,
    apply_mask,
    feature_scores,
    fit_svm_arrays,
    rfe,
    svm_objective,
    svm_subgradient,
    train_linear_svm,
)

LABELS = ["Remission", "Hypomania", "Mania"]


def table(X, y):
    return FeatureTable(X, [LABELS[i] for i in y], [f"f{j}" for j in range(X.shape[1])])


def planted(seed, n_per_class=30, informative=10, noise=90, shift=1.0):
    """First ``informative`` columns carry class-dependent means; the rest is noise."""
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(3), n_per_class)
    X = rng.standard_normal((len(y), informative + noise))
    centres = rng.choice([-1.0, 1.0], size=(3, informative)) * shift
    centres[:, :] -= centres.mean(axis=0)  # every informative column varies across classes
    centres[:, np.all(centres == 0, axis=0)] = np.array([[-shift], [0.0], [shift]])
    X[:, :informative] += centres[y]
    perm = rng.permutation(len(y))
    return table(X[perm], y[perm])


def blobs(margin=2.0):
    rng = np.random.default_rng(3)
    centres = np.array([[-3.0, 0.0], [3.0, 0.0], [0.0, 4.0]])
    y = np.repeat(np.arange(3), 20)
    X = centres[y] + rng.uniform(-0.5, 0.5, (60, 2))
    # separability check by enumeration: every cross-class pair is at least ``margin`` apart
    for i, j in itertools.combinations(range(60), 2):
        if y[i] != y[j]:
            assert np.linalg.norm(X[i] - X[j]) >= margin
    return X, y


def test_separable_blobs():
    X, y = blobs()
    model = train_linear_svm(table(X, y), C=10.0, epochs=200)
    assert np.mean(model.predict(X) == y) == 1.0


def test_single_class_rejected():
    with pytest.raises(SingleClass):
        train_linear_svm(table(np.zeros((5, 2)), np.zeros(5, dtype=int)))
    with pytest.raises(SingleClass):
        rfe(table(np.zeros((5, 4)), np.zeros(5, dtype=int)), target_k=2)


def test_duplicated_dataset_full_batch():
    X, y = blobs()
    a = fit_svm_arrays(X, y, C=1.0, epochs=100, batch_size=None)
    b = fit_svm_arrays(np.vstack([X, X]), np.concatenate([y, y]), C=1.0, epochs=100, batch_size=None)
    grid = np.stack(np.meshgrid(np.linspace(-6, 6, 25), np.linspace(-3, 7, 25)), -1).reshape(-1, 2)
    assert np.max(np.abs(a.decision_function(grid) - b.decision_function(grid))) <= 1e-6


def test_duplicated_dataset_mini_batch_probe_grid():
    X, y = blobs()
    a = fit_svm_arrays(X, y, C=1.0, epochs=200)
    b = fit_svm_arrays(np.vstack([X, X]), np.concatenate([y, y]), C=1.0, epochs=100)
    grid = np.stack(np.meshgrid(np.linspace(-6, 6, 25), np.linspace(-3, 7, 25)), -1).reshape(-1, 2)
    agree = np.mean(a.predict(grid) == b.predict(grid))
    assert agree >= 0.95
    assert np.all(a.predict(X) == b.predict(X))


def test_subgradient_matches_numerical_gradient():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((30, 5))
    y = rng.integers(0, 3, 30)
    checked = 0
    while checked < 20:
        W, b = rng.standard_normal((3, 5)), rng.standard_normal(3)
        Y = np.where(y[:, None] == np.arange(3), 1.0, -1.0)
        if np.min(np.abs(Y * (X @ W.T + b) - 1.0)) < 1e-3:
            continue  # hinge kink within reach of the finite-difference step
        gW, gb = svm_subgradient(W, b, X, y, 1.5)
        eps = 1e-6
        for idx in np.ndindex(W.shape):
            Wp, Wm = W.copy(), W.copy()
            Wp[idx] += eps
            Wm[idx] -= eps
            num = (svm_objective(Wp, b, X, y, 1.5) - svm_objective(Wm, b, X, y, 1.5)) / (2 * eps)
            assert abs(num - gW[idx]) <= 1e-4
        for k in range(3):
            bp, bm = b.copy(), b.copy()
            bp[k] += eps
            bm[k] -= eps
            num = (svm_objective(W, bp, X, y, 1.5) - svm_objective(W, bm, X, y, 1.5)) / (2 * eps)
            assert abs(num - gb[k]) <= 1e-4
        checked += 1


def test_objective_decreases_on_average():
    t = planted(0)
    m = train_linear_svm(t, epochs=50)
    h = m.loss_history
    assert np.mean(h[-10:]) < h[0]


def test_unnormalized_input_warns():
    X, y = blobs()
    with pytest.warns(NotNormalizedWarning):
        fit_svm_arrays(X * 100 + 50, y, epochs=2)


def test_target_too_large():
    t = planted(0, informative=3, noise=2)
    with pytest.raises(TargetTooLarge):
        rfe(t, target_k=5)
    with pytest.raises(TargetTooLarge):
        rfe(t, target_k=9)


@pytest.mark.parametrize("seed", range(5))
def test_planted_signal_recovered(seed):
    mask = rfe(planted(seed), target_k=10, seed=seed)
    assert len(set(mask.selected) & set(range(10))) >= 9


def test_single_round_when_step_is_everything():
    rng = np.random.default_rng(0)
    t = table(rng.standard_normal((30, 200)), np.arange(30) % 3)
    mask = rfe(t, target_k=100, step_frac=1.0, epochs=20)
    assert len(mask.elimination_trace) == 1
    assert len(mask.elimination_trace[0]["removed"]) == 100
    assert len(mask) == 100


@given(st.integers(12, 60), st.integers(1, 11), st.floats(0.01, 0.9))
def test_rfe_monotone_and_exact(d, k, frac):
    if k >= d:
        return
    rng = np.random.default_rng(d)
    t = table(rng.standard_normal((12, d)), np.arange(12) % 3)
    mask = rfe(t, target_k=k, step_frac=frac, epochs=3)
    remaining = d
    for entry in mask.elimination_trace:
        assert len(entry["removed"]) >= 1
        remaining -= len(entry["removed"])
        assert remaining >= k
    assert remaining == k == len(mask)
    removed = [i for e in mask.elimination_trace for i in e["removed"]]
    assert sorted(removed + mask.selected) == list(range(d))


def test_ranking_prefers_informative_dims():
    info_ranks, noise_ranks = [], []
    for seed in range(10):
        t = planted(seed)
        scores = feature_scores(fit_svm_arrays(t.X, t.y, seed=seed))
        ranks = np.empty(len(scores))
        ranks[np.argsort(-scores, kind="stable")] = np.arange(len(scores))
        info_ranks += ranks[:10].tolist()
        noise_ranks += ranks[10:].tolist()
    assert np.mean(info_ranks) < np.mean(noise_ranks)
    assert mannwhitneyu(info_ranks, noise_ranks, alternative="less").pvalue < 0.01


def test_rfe_determinism():
    t = planted(1)
    a, b = rfe(t, target_k=20, seed=3), rfe(t, target_k=20, seed=3)
    assert a == b


def test_apply_mask_examples(tmp_path):
    t = table(np.arange(12.0).reshape(4, 3), np.arange(4) % 3)
    same = apply_mask(t, SelectionMask([0, 1, 2]))
    np.testing.assert_array_equal(same.X, t.X)
    assert same.names == t.names
    first = apply_mask(t, SelectionMask([0]))
    assert first.dim == 1 and first.names == ("f0",)
    with pytest.raises(DimensionMismatch):
        apply_mask(t, SelectionMask([3]))
    m = SelectionMask([2, 0], [{"round": 1, "removed": [1], "score": 1.0}])
    m.to_json(tmp_path / "m.json")
    assert SelectionMask.from_json(tmp_path / "m.json") == m


def test_dev_shape_after_mask(default_corpus, default_features):
    from mania_pipe.corpus import Split
    from mania_pipe.evaluation import build_table
    from mania_pipe.features import znorm_apply, znorm_fit

    tr = build_table(default_corpus, default_features, Split.TRAIN, (6, 7))
    dv = build_table(default_corpus, default_features, Split.DEV, (6, 7))
    p = znorm_fit(tr)
    mask = rfe(znorm_apply(tr, p), target_k=100)
    assert apply_mask(znorm_apply(dv, p), mask).dim == 100
