import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mania_pipe.errors import DimensionMismatch, MissingFile, SchemaViolation
from mania_pipe.evaluation import build_table
from mania_pipe.corpus import Split
from mania_pipe.features import (
    STD_FLOOR,
    FeatureTable,
    NormParams,
    load_table,
    save_table,
    znorm_apply,
    znorm_fit,
    znorm_invert,
)

LABELS = ["Remission", "Hypomania", "Mania"]


def table(X, labels=None):
    X = np.asarray(X, dtype=np.float64)
    labels = labels or [LABELS[i % 3] for i in range(X.shape[0])]
    return FeatureTable(X, labels, [f"f{j}" for j in range(X.shape[1])])


def test_single_row_fit():
    p = znorm_fit(table([[1.0, -2.0, 7.0]]))
    np.testing.assert_array_equal(p.mean, [1.0, -2.0, 7.0])
    np.testing.assert_array_equal(p.stddev, [STD_FLOOR] * 3)


def test_two_row_fit():
    p = znorm_fit(table([[0.0, 0.0], [2.0, 2.0]]))
    np.testing.assert_array_equal(p.mean, [1.0, 1.0])
    np.testing.assert_array_equal(p.stddev, [1.0, 1.0])


def test_fit_matches_two_pass_oracle():
    X = np.random.default_rng(0).standard_normal((50, 10)) * 3 + 1
    p = znorm_fit(table(X))
    for j in range(10):
        col = X[:, j].tolist()
        mean = sum(col) / len(col)
        var = sum((v - mean) ** 2 for v in col) / len(col)
        assert abs(p.mean[j] - mean) <= 1e-12
        assert abs(p.stddev[j] - var ** 0.5) <= 1e-12


@given(arrays(np.float64, st.tuples(st.integers(3, 30), st.integers(1, 6)),
              elements=st.floats(-1e4, 1e4, allow_nan=False)))
def test_normalized_train_columns(X):
    t = table(X)
    p = znorm_fit(t)
    Z = znorm_apply(t, p).X
    varying = np.std(X, axis=0) > 1e-3 * (1 + np.abs(X).max())
    assert np.all(np.abs(Z.mean(axis=0)) < 1e-9)
    np.testing.assert_allclose(Z.std(axis=0)[varying], 1.0, atol=1e-9)
    np.testing.assert_allclose(znorm_invert(znorm_apply(t, p), p).X, X, rtol=0,
                               atol=1e-12 * (1 + np.abs(X).max()))


def test_apply_to_other_tables():
    rng = np.random.default_rng(1)
    a = table(rng.standard_normal((40, 5)))
    p = znorm_fit(a)
    dev = znorm_apply(table(rng.standard_normal((10, 5)) + 3), p)
    assert np.all(np.isfinite(dev.X))
    doubled = znorm_apply(a.with_X(2 * a.X), p)
    np.testing.assert_allclose(doubled.X.std(axis=0), 2.0, atol=1e-9)
    with pytest.raises(DimensionMismatch):
        znorm_apply(table(np.zeros((2, 4))), p)


def test_leakage_guard(default_corpus, default_features):
    tr = build_table(default_corpus, default_features, Split.TRAIN)
    dv = build_table(default_corpus, default_features, Split.DEV)
    both = FeatureTable(np.vstack([tr.X, dv.X]), tr.labels + dv.labels, tr.names)
    p_train, p_both = znorm_fit(tr), znorm_fit(both)
    assert not np.allclose(p_train.mean, p_both.mean)
    assert not np.allclose(p_train.stddev, p_both.stddev)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    X = rng.standard_normal((12, 7)) * 10.0 ** rng.integers(-8, 8, (12, 7))
    t = FeatureTable(X, [LABELS[i % 3] for i in range(12)], [f"f{j}" for j in range(7)],
                     [f"rec{i}" for i in range(12)], [None if i % 4 == 0 else i % 7 + 1 for i in range(12)])
    save_table(t, tmp_path / "t.csv")
    back = load_table(tmp_path / "t.csv")
    assert np.max(np.abs(back.X - X)) <= 1e-15
    assert back.labels == t.labels and back.names == t.names
    assert back.recording_ids == t.recording_ids and back.task_indices == t.task_indices


def test_csv_errors(tmp_path):
    with pytest.raises(MissingFile):
        load_table(tmp_path / "none.csv")
    p = tmp_path / "bad.csv"
    p.write_text("f0,f1,label,recording_id,task_index\n1.0,Mania,r,1\n")
    with pytest.raises(SchemaViolation):
        load_table(p)
    p.write_text("f0,f1,label\n1,2,Mania\n")
    with pytest.raises(SchemaViolation):
        load_table(p)
    p.write_text("f0,label,recording_id,task_index\nabc,Mania,r,1\n")
    with pytest.raises(SchemaViolation):
        load_table(p)


def test_norm_params_json(tmp_path):
    p = NormParams([1.0, 2.0], [0.5, 3.0])
    p.to_json(tmp_path / "n.json")
    q = NormParams.from_json(tmp_path / "n.json")
    np.testing.assert_array_equal(q.mean, p.mean)
    np.testing.assert_array_equal(q.stddev, p.stddev)
    (tmp_path / "bad.json").write_text('{"mean": [1]}')
    with pytest.raises(SchemaViolation):
        NormParams.from_json(tmp_path / "bad.json")
    with pytest.raises(SchemaViolation):
        NormParams([0.0], [0.0])


def test_table_shape_checks():
    with pytest.raises(DimensionMismatch):
        FeatureTable(np.zeros((2, 2)), ["Mania"], ["a", "b"])
    with pytest.raises(DimensionMismatch):
        FeatureTable(np.zeros((1, 2)), ["Mania"], ["a"])
    t = table(np.arange(12.0).reshape(4, 3))
    sub = t.subset([3, 1])
    np.testing.assert_array_equal(sub.X[:, 0], [9.0, 3.0])
    assert sub.labels == ("Remission", "Hypomania")
    np.testing.assert_array_equal(t.y, [0, 1, 2, 0])
