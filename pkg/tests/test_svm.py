import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from harfuse import svm
from harfuse.errors import ContractError, DegenerateLabelsError, FormatError


def blobs(rng, n_per=40, C=3, d=2, gap=6.0, spread=0.5):
    centres = rng.normal(size=(C, d)) * gap
    X = np.concatenate([c + spread * rng.normal(size=(n_per, d)) for c in centres])
    y = np.repeat(np.arange(C), n_per)
    return X, y


def noisy(rng, n=300, d=5, C=3):
    y = rng.integers(0, C, size=n)
    X = rng.normal(size=(n, d))
    X[np.arange(n), y % d] += 1.0
    return X, y


def test_separable_blobs():
    X = np.array([[0.0, 0.0], [0.3, 0.1], [-0.2, 0.2], [5.0, 5.0], [5.2, 4.9], [4.8, 5.3]])
    y = np.array([0, 0, 0, 1, 1, 1])
    m = svm.svm_train(X, y)
    assert np.array_equal(svm.predict(m, X), y)


def test_multiclass_blobs(rng):
    X, y = blobs(rng)
    m = svm.svm_train(X, y)
    assert svm.evaluate(m, X, y).accuracy == 1.0


def test_large_regularization_collapses(rng):
    X, y = blobs(rng)
    m = svm.svm_train(X, y, lam=1e6)
    assert np.max(np.abs(m.W)) < 1e-4
    assert np.max(np.abs(m.b)) < 1e-4
    assert np.unique(svm.predict(m, rng.normal(size=(50, 2)))).size == 1


def test_determinism(rng):
    X, y = noisy(rng)
    a = svm.svm_train(X, y, seed=3, epochs=30)
    b = svm.svm_train(X, y, seed=3, epochs=30)
    assert np.array_equal(a.W, b.W) and np.array_equal(a.b, b.b)
    c = svm.svm_train(X, y, seed=4, epochs=30)
    assert not np.array_equal(a.W, c.W)


def test_score_oracle(rng):
    X, y = noisy(rng)
    m = svm.svm_train(X, y, epochs=20)
    x = rng.normal(size=5)
    xh = (x - m.mean) / m.scale
    expected = [sum(m.W[c, j] * xh[j] for j in range(5)) + m.b[c] for c in range(3)]
    assert np.allclose(svm.svm_score(m, x), expected, atol=1e-12, rtol=0)
    with pytest.raises(ContractError):
        svm.svm_score(m, np.zeros(4))


def test_zero_weights_give_bias(rng):
    m = svm.SvmModel(np.zeros((3, 4)), np.array([0.5, -1.0, 2.0]), np.zeros(4), np.ones(4))
    scores = svm.svm_score(m, rng.normal(size=(10, 4)))
    assert np.array_equal(scores, np.tile(m.b, (10, 1)))
    assert np.all(svm.predict(m, rng.normal(size=(10, 4))) == 2)


def test_ties_go_to_lowest_index():
    m = svm.SvmModel(np.zeros((3, 2)), np.array([1.0, 1.0, 0.0]), np.zeros(2), np.ones(2))
    assert np.all(svm.predict(m, np.ones((4, 2))) == 0)


@given(st.integers(0, 2**31), st.floats(0.01, 100.0))
def test_joint_scaling_keeps_argmax(seed, c):
    rng = np.random.default_rng(seed)
    W, b = rng.normal(size=(4, 3)), rng.normal(size=4)
    mu, sc = rng.normal(size=3), rng.uniform(0.5, 2, size=3)
    x = rng.normal(size=(20, 3))
    m1 = svm.SvmModel(W, b, mu, sc)
    m2 = svm.SvmModel(c * W, c * b, mu, sc)
    assert np.array_equal(svm.predict(m1, x), svm.predict(m2, x))


def test_evaluate_counts(rng):
    X, y = noisy(rng)
    m = svm.svm_train(X[:200], y[:200], epochs=30)
    ev = svm.evaluate(m, X[200:], y[200:])
    pred = svm.predict(m, X[200:])
    assert ev.accuracy == pytest.approx(np.mean(pred == y[200:]), abs=1e-15)
    assert np.array_equal(ev.confusion.sum(axis=1), np.bincount(y[200:], minlength=3))
    for i in range(3):
        for j in range(3):
            assert ev.confusion[i, j] == np.sum((y[200:] == i) & (pred == j))
    assert ev.per_class[1] == pytest.approx(ev.confusion[1, 1] / ev.confusion[1].sum())
    with pytest.raises(ContractError):
        svm.evaluate(m, np.zeros((0, 5)), np.zeros(0))


def test_perfect_model_diagonal(rng):
    X, y = blobs(rng)
    ev = svm.evaluate(svm.svm_train(X, y), X, y)
    assert ev.accuracy == 1.0
    assert np.array_equal(ev.confusion, np.diag(np.diag(ev.confusion)))


def test_standardization_round_trip(rng):
    X = rng.normal(size=(100, 4)) * [1, 100, 1e-3, 5] + [3, -7, 0.5, 1e4]
    X = np.column_stack([X, np.full(100, 2.0)])
    y = rng.integers(0, 2, size=100)
    m = svm.svm_train(X, y, epochs=5)
    Xs = (X - m.mean) / m.scale
    assert np.all(np.abs(Xs.mean(axis=0)) <= 1e-10)
    assert np.allclose(Xs[:, :4].var(axis=0), 1.0, atol=1e-8)
    assert np.all(Xs[:, 4] == 0)


def test_objective_settles(rng):
    X, y = noisy(rng, n=400)
    m = svm.svm_train(X, y)
    tail = m.objective[-11:]
    assert np.all(tail[1:] <= tail[:-1] * 1.01)


def test_prediction_order_invariant(rng):
    X, y = noisy(rng)
    m = svm.svm_train(X, y, epochs=20)
    perm = rng.permutation(len(X))
    assert np.array_equal(svm.predict(m, X)[perm], svm.predict(m, X[perm]))


def test_degenerate_labels(rng):
    with pytest.raises(DegenerateLabelsError):
        svm.svm_train(rng.normal(size=(10, 2)), np.zeros(10, dtype=int))
    with pytest.raises(DegenerateLabelsError):
        svm.svm_train(rng.normal(size=(1, 2)), np.array([0]))
    with pytest.raises(ContractError):
        svm.svm_train(rng.normal(size=(10, 2)), np.arange(9) % 2)


def test_accepts_feature_objects(rng):
    from harfuse.cnn import FeatureMatrix

    X, y = blobs(rng, C=2)
    a = svm.svm_train(FeatureMatrix(X), y, epochs=10)
    b = svm.svm_train(X, y, epochs=10)
    assert np.array_equal(a.W, b.W)


def test_save_load(tmp_path, rng):
    X, y = noisy(rng)
    m = svm.svm_train(X, y, epochs=10, class_names=("a", "b", "c"))
    path = tmp_path / "s.hfc"
    svm.save_model(m, path)
    back = svm.load_model(path)
    assert back.class_names == ("a", "b", "c")
    assert np.array_equal(svm.svm_score(back, X), svm.svm_score(m, X))
    assert svm.model_digest(back) == svm.model_digest(m)
    path.write_bytes(path.read_bytes()[:40])
    with pytest.raises(FormatError):
        svm.load_model(path)
