"""Canonical correlation analysis and summation fusion of canonical variates.

Features are stored sample-per-row (n x p). A fitted model maps centered X to
``X' = (X - mean_x) @ A`` and Y likewise with B; the canonical variates have
unit variance, are uncorrelated within each set and correlate pairwise across
sets by ``lambdas``.
"""
import hashlib
from dataclasses import dataclass

import numpy as np

from harfuse import linalg
from harfuse.cnn import FeatureMatrix
from harfuse.container import read_container, write_container
from harfuse.errors import AlignmentError, ContractError, FormatError, InsufficientSamplesError
from harfuse.signal_image import DOMAINS

MAGIC = "HFCCA1"
SINGULAR_TOL = 1e-10
DEFAULT_RIDGE_SCALE = 1e-4


@dataclass(frozen=True, eq=False)
class CcaModel:
    A: np.ndarray
    B: np.ndarray
    lambdas: np.ndarray
    mean_x: np.ndarray
    mean_y: np.ndarray
    ridge_scale: float
    eps_x: float
    eps_y: float

    @property
    def d(self):
        return self.lambdas.shape[0]


@dataclass(frozen=True, eq=False)
class FusedFeatures:
    values: np.ndarray
    stage: str
    ids: tuple = ()


def _features(m):
    if isinstance(m, (FeatureMatrix, FusedFeatures)):
        return np.asarray(m.values, dtype=np.float64), tuple(m.ids)
    v = np.asarray(m, dtype=np.float64)
    if v.ndim != 2:
        raise ContractError(f"features must be 2-D, got {v.shape}")
    return v, tuple(range(v.shape[0]))


def _aligned(X, Y):
    x, xi = _features(X)
    y, yi = _features(Y)
    if x.shape[0] != y.shape[0] or xi != yi:
        raise AlignmentError("feature matrices do not describe the same samples in the same order")
    return x, y, xi


def fit_cca(X, Y, ridge_scale=DEFAULT_RIDGE_SCALE):
    """Fit CCA through the whitened cross-covariance.

    With ``Sxx + ex I = Lx Lx^T`` and ``Syy + ey I = Ly Ly^T`` (ridge
    ``e = ridge_scale * trace(S) / dim``), the SVD ``Lx^-1 Sxy Ly^-T = U S V^T``
    gives ``A = Lx^-T U``, ``B = Ly^-T V`` and the canonical correlations S.
    Directions with correlation <= 1e-10 are dropped, and at most n-1 are kept.
    """
    x, y, _ = _aligned(X, Y)
    n, p = x.shape
    q = y.shape[1]
    if n < 3:
        raise InsufficientSamplesError(f"CCA needs at least 3 samples, got {n}")
    if ridge_scale < 0:
        raise ContractError("ridge_scale must be >= 0")
    mx, my = x.mean(axis=0), y.mean(axis=0)
    xc, yc = x - mx, y - my
    sxx = linalg.covariance(xc, centered=False)
    syy = linalg.covariance(yc, centered=False)
    sxy = (xc.T @ yc) / (n - 1)
    ex = ridge_scale * np.trace(sxx) / p
    ey = ridge_scale * np.trace(syy) / q
    Lx = linalg.cholesky(sxx, ex)
    Ly = linalg.cholesky(syy, ey)
    T = linalg.solve_lower(Ly, linalg.solve_lower(Lx, sxy).T).T
    U, S, V = linalg.thin_svd(T)
    d = min(int(np.sum(S > SINGULAR_TOL)), n - 1)
    A = linalg.solve_upper(Lx.T, U[:, :d])
    B = linalg.solve_upper(Ly.T, V[:, :d])
    for j in range(d):
        i = int(np.argmax(np.abs(A[:, j])))
        if A[i, j] < 0:
            A[:, j] = -A[:, j]
            B[:, j] = -B[:, j]
    return CcaModel(A, B, S[:d].copy(), mx, my, float(ridge_scale), float(ex), float(ey))


def transform(model, X, Y):
    """Canonical variates ``((X - mean_x) A, (Y - mean_y) B)``."""
    x, _ = _features(X)
    y, _ = _features(Y)
    if x.shape[1] != model.A.shape[0] or y.shape[1] != model.B.shape[0]:
        raise ContractError(
            f"expected {model.A.shape[0]} and {model.B.shape[0]} columns, got {x.shape[1]} and {y.shape[1]}"
        )
    if x.shape[0] != y.shape[0]:
        raise ContractError("X and Y have different sample counts")
    return (x - model.mean_x) @ model.A, (y - model.mean_y) @ model.B


def fuse_sum(xv, yv, stage="", ids=()):
    xv = np.asarray(xv, dtype=np.float64)
    yv = np.asarray(yv, dtype=np.float64)
    if xv.shape != yv.shape:
        raise ContractError(f"cannot sum variates of shapes {xv.shape} and {yv.shape}")
    z = xv + yv
    if not np.all(np.isfinite(z)):
        raise ContractError("fused features are not finite")
    return FusedFeatures(z, stage, tuple(ids) if ids else tuple(range(z.shape[0])))


def _ordered(spatial, frequency, timespectrum, order):
    by_name = dict(zip(DOMAINS, (spatial, frequency, timespectrum)))
    if sorted(order) != sorted(DOMAINS):
        raise ContractError(f"stage order must be a permutation of {DOMAINS}, got {order}")
    return [by_name[k] for k in order]


def two_stage_fuse(spatial, frequency, timespectrum, ridge_scale=DEFAULT_RIDGE_SCALE, order=DOMAINS):
    """Fuse order[0] with order[1], then the result with order[2].

    Returns ((stage1 model, stage2 model), stage-2 FusedFeatures).
    """
    a, b, c = _ordered(spatial, frequency, timespectrum, order)
    _, _, ids = _aligned(a, b)
    _aligned(a, c)
    m1 = fit_cca(a, b, ridge_scale)
    z1 = fuse_sum(*transform(m1, a, b), stage="stage1", ids=ids)
    m2 = fit_cca(z1, c, ridge_scale)
    z2 = fuse_sum(*transform(m2, z1, c), stage="stage2", ids=ids)
    return (m1, m2), z2


def apply_two_stage(models, spatial, frequency, timespectrum, order=DOMAINS):
    """Apply fitted stage models to new (e.g. test) features."""
    a, b, c = _ordered(spatial, frequency, timespectrum, order)
    _, _, ids = _aligned(a, b)
    _aligned(a, c)
    m1, m2 = models
    z1 = fuse_sum(*transform(m1, a, b), stage="stage1", ids=ids)
    return fuse_sum(*transform(m2, z1, c), stage="stage2", ids=ids)


def save_model(model, path):
    header = {"kind": "cca", "ridge_scale": model.ridge_scale, "eps_x": model.eps_x, "eps_y": model.eps_y}
    blocks = [("A", model.A), ("B", model.B), ("lambdas", model.lambdas), ("mean_x", model.mean_x), ("mean_y", model.mean_y)]
    write_container(path, MAGIC, header, blocks)


def load_model(path):
    header, arrays = read_container(path, MAGIC)
    try:
        return CcaModel(
            arrays["A"], arrays["B"], arrays["lambdas"], arrays["mean_x"], arrays["mean_y"],
            float(header["ridge_scale"]), float(header["eps_x"]), float(header["eps_y"]),
        )
    except KeyError as exc:
        raise FormatError(f"{path}: incomplete CCA container ({exc})") from exc


def model_digest(model):
    h = hashlib.sha256()
    for arr in (model.A, model.B, model.lambdas, model.mean_x, model.mean_y):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()
