import numpy as np
import pytest
from conftest import well_conditioned
from hypothesis import given
from hypothesis import strategies as st

from harfuse import cca
from harfuse.cnn import FeatureMatrix
from harfuse.errors import AlignmentError, ContractError, FormatError, InsufficientSamplesError


def corr(a, b):
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    return (a.T @ b) / np.outer(np.sqrt((a * a).sum(0)), np.sqrt((b * b).sum(0)))


def sample_cov(a, b):
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    return a.T @ b / (a.shape[0] - 1)


@pytest.mark.parametrize("p", [4, 16])
def test_block_structure_of_variates(rng, p):
    for _ in range(5):
        X, Y = well_conditioned(rng, 200, p, p)
        m = cca.fit_cca(X, Y, ridge_scale=1e-8)
        xv, yv = cca.transform(m, X, Y)
        assert m.d == p
        assert np.allclose(np.var(xv, axis=0, ddof=1), 1, atol=1e-3)
        assert np.allclose(np.var(yv, axis=0, ddof=1), 1, atol=1e-3)
        assert np.allclose(corr(xv, xv), np.eye(p), atol=1e-6)
        assert np.allclose(corr(yv, yv), np.eye(p), atol=1e-6)
        assert np.allclose(corr(xv, yv), np.diag(m.lambdas), atol=1e-6)


def test_unit_variance_at_default_ridge(rng):
    X, Y = well_conditioned(rng, 300, 6, 5)
    xv, yv = cca.transform(cca.fit_cca(X, Y), X, Y)
    assert np.allclose(np.var(xv, axis=0, ddof=1), 1, atol=1e-3)
    assert np.allclose(np.var(yv, axis=0, ddof=1), 1, atol=1e-3)


def test_pearson_for_scalars(rng):
    for _ in range(20):
        x = rng.normal(size=(50, 1))
        y = rng.uniform(-1, 1) * x + rng.normal(size=(50, 1))
        m = cca.fit_cca(x, y, ridge_scale=0.0)
        r = np.corrcoef(x[:, 0], y[:, 0])[0, 1]
        assert abs(m.lambdas[0] - abs(r)) < 1e-8


def test_self_correlation(rng):
    X, _ = well_conditioned(rng, 200, 6, 6)
    m = cca.fit_cca(X, X, ridge_scale=1e-8)
    assert np.allclose(m.lambdas, 1, atol=1e-4)


def test_invertible_mixing_and_independence(rng):
    X = rng.normal(size=(500, 5))
    R = rng.normal(size=(5, 5)) + 3 * np.eye(5)
    assert np.allclose(cca.fit_cca(X, X @ R, 1e-8).lambdas, 1, atol=1e-4)
    Y = rng.normal(size=(5000, 3))
    X2 = rng.normal(size=(5000, 3))
    assert np.all(cca.fit_cca(X2, Y).lambdas < 0.5)


def test_equivalence_with_eigenproblem(rng):
    for _ in range(20):
        X = rng.normal(size=(5, 2))
        Y = rng.normal(size=(5, 2))
        m = cca.fit_cca(X, Y, ridge_scale=0.0)
        sxx, syy, sxy = sample_cov(X, X), sample_cov(Y, Y), sample_cov(X, Y)
        M = np.linalg.inv(sxx) @ sxy @ np.linalg.inv(syy) @ sxy.T
        ev = np.sort(np.linalg.eigvals(M).real)[::-1]
        assert np.allclose(m.lambdas**2, ev, atol=1e-8)


@given(st.integers(0, 2**31))
def test_affine_invariance(seed):
    rng = np.random.default_rng(seed)
    X, Y = well_conditioned(rng, 200, 4, 4)
    R = rng.normal(size=(4, 4)) + 2 * np.eye(4)
    t = rng.normal(size=4) * 10
    a = cca.fit_cca(X, Y, ridge_scale=0.0)
    b = cca.fit_cca(X @ R + t, Y, ridge_scale=0.0)
    assert np.allclose(a.lambdas, b.lambdas, atol=1e-6)


@given(st.integers(0, 2**31), st.integers(2, 8), st.integers(2, 8))
def test_symmetry(seed, p, q):
    rng = np.random.default_rng(seed)
    X, Y = well_conditioned(rng, 60, p, q)
    a = cca.fit_cca(X, Y)
    b = cca.fit_cca(Y, X)
    assert a.d == b.d
    assert np.allclose(a.lambdas, b.lambdas, atol=1e-10)


def test_lambdas_sorted_and_bounded(rng):
    X, Y = well_conditioned(rng, 100, 7, 4)
    m = cca.fit_cca(X, Y)
    assert np.all(np.diff(m.lambdas) <= 0)
    assert np.all((m.lambdas >= 0) & (m.lambdas <= 1 + 1e-8))
    assert m.A.shape == (7, 4) and m.B.shape == (4, 4)


def test_rank_of_cross_covariance(rng):
    n = 100
    X = rng.normal(size=(n, 4))
    noise = rng.normal(size=(n, 2))
    basis = np.column_stack([np.ones(n), X])
    noise -= basis @ np.linalg.lstsq(basis, noise, rcond=None)[0]
    Y = np.column_stack([X[:, :2] @ rng.normal(size=(2, 2)) + 0.5 * rng.normal(size=(n, 2)), noise])
    Y[:, 2:] -= basis @ np.linalg.lstsq(basis, Y[:, 2:], rcond=None)[0]
    assert np.linalg.matrix_rank(sample_cov(X, Y), tol=1e-10) == 2
    m = cca.fit_cca(X, Y, ridge_scale=0.0)
    assert m.d == 2


def test_dimension_capped_by_samples(rng):
    X = rng.normal(size=(4, 6))
    Y = rng.normal(size=(4, 5))
    m = cca.fit_cca(X, Y)
    assert m.d <= 3


def test_fit_errors(rng):
    with pytest.raises(InsufficientSamplesError):
        cca.fit_cca(np.zeros((2, 2)), np.zeros((2, 2)))
    a = FeatureMatrix(rng.normal(size=(5, 2)), ids=("a", "b", "c", "d", "e"))
    b = FeatureMatrix(rng.normal(size=(5, 2)), ids=("a", "b", "c", "e", "d"))
    with pytest.raises(AlignmentError):
        cca.fit_cca(a, b)
    with pytest.raises(AlignmentError):
        cca.fit_cca(rng.normal(size=(5, 2)), rng.normal(size=(6, 2)))


def test_transform_dimension_mismatch(rng):
    X, Y = well_conditioned(rng, 50, 3, 3)
    m = cca.fit_cca(X, Y)
    with pytest.raises(ContractError):
        cca.transform(m, X[:, :2], Y)


def test_fuse_sum(rng):
    a = rng.normal(size=(4, 3))
    assert np.all(cca.fuse_sum(a, -a).values == 0)
    assert np.array_equal(cca.fuse_sum(a, np.zeros_like(a)).values, a)
    b = rng.normal(size=(4, 3))
    assert np.array_equal(cca.fuse_sum(a, b).values, a + b)
    with pytest.raises(ContractError):
        cca.fuse_sum(a, b[:, :2])


def test_two_stage_identical_inputs(rng):
    X, _ = well_conditioned(rng, 200, 8, 8)
    f = FeatureMatrix(X)
    (m1, m2), z = cca.two_stage_fuse(f, f, f)
    assert np.allclose(m1.lambdas, 1, atol=1e-3)
    assert np.allclose(m2.lambdas, 1, atol=1e-3)
    assert z.values.shape[0] == 200 and z.stage == "stage2"


def test_two_stage_apply_matches_fit_on_train(rng):
    X, Y = well_conditioned(rng, 120, 6, 6)
    Z = rng.normal(size=(120, 5)) + X[:, :5]
    models, z = cca.two_stage_fuse(X, Y, Z)
    again = cca.apply_two_stage(models, X, Y, Z)
    assert np.allclose(z.values, again.values, atol=1e-12)
    assert again.values.shape == (120, models[1].d)


def test_two_stage_stage_order(rng):
    X, Y = well_conditioned(rng, 80, 4, 4)
    Z = rng.normal(size=(80, 4))
    order = ("frequency", "time_spectrum", "spatial")
    (m1, _), _ = cca.two_stage_fuse(X, Y, Z, order=order)
    ref = cca.fit_cca(Y, Z)
    assert np.allclose(m1.lambdas, ref.lambdas)
    with pytest.raises(ContractError):
        cca.two_stage_fuse(X, Y, Z, order=("spatial", "spatial", "frequency"))


def test_two_stage_misaligned(rng):
    a = FeatureMatrix(rng.normal(size=(5, 2)), ids=tuple("abcde"))
    c = FeatureMatrix(rng.normal(size=(5, 2)), ids=tuple("abced"))
    with pytest.raises(AlignmentError):
        cca.two_stage_fuse(a, a, c)


def test_save_load(tmp_path, rng):
    X, Y = well_conditioned(rng, 50, 3, 4)
    m = cca.fit_cca(X, Y)
    path = tmp_path / "c.hfc"
    cca.save_model(m, path)
    assert path.read_bytes()[:6] == b"HFCCA1"
    back = cca.load_model(path)
    for a, b in zip(cca.transform(m, X, Y), cca.transform(back, X, Y)):
        assert np.array_equal(a, b)
    assert cca.model_digest(back) == cca.model_digest(m)
    path.write_bytes(b"HFSVM1" + path.read_bytes()[6:])
    with pytest.raises(FormatError):
        cca.load_model(path)
