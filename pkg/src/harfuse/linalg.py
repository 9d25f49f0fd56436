"""Dense linear algebra used by CCA and covariance estimation.

Matrices are plain float64 numpy arrays. The symmetric eigensolver is cyclic
Jacobi (compiled kernel when available) and the thin SVD is built on top of it
through the smaller Gram matrix.
"""
import numpy as np

from harfuse._backend import kernels
from harfuse.errors import (
    ContractError,
    ConvergenceError,
    InsufficientSamplesError,
    NotPositiveDefiniteError,
)

SYMMETRY_TOL = 1e-8
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100

_schedules = {}


def _as_matrix(m, name="matrix"):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ContractError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ContractError(f"{name} has non-finite entries")
    return m


def _check_square_symmetric(m, name):
    if m.shape[0] != m.shape[1]:
        raise ContractError(f"{name} must be square, got {m.shape}")
    defect = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if defect > SYMMETRY_TOL:
        raise ContractError(f"{name} is not symmetric (max |m - m^T| = {defect:.3e})")


def covariance(samples, centered=True):
    """Sample covariance ``Xc^T Xc / (n - 1)`` of an (n, p) sample-row matrix.

    The result is symmetrized so that it is exactly symmetric as stored.
    """
    X = _as_matrix(samples, "samples")
    n = X.shape[0]
    if n < 2:
        raise InsufficientSamplesError(f"covariance needs n >= 2 samples, got {n}")
    if centered:
        X = X - X.mean(axis=0)
    c = (X.T @ X) / (n - 1)
    return (c + c.T) / 2.0


def _schedule(n):
    if n not in _schedules:
        _schedules[n] = np.ascontiguousarray(kernels.jacobi_schedule(n), dtype=np.int64)
    return _schedules[n]


def sym_eig(m):
    """Eigen-decomposition of a symmetric matrix.

    Returns
    -------
    w : ndarray (p,)
        Eigenvalues in descending order.
    V : ndarray (p, p)
        Orthonormal eigenvectors as columns, ``m @ V[:, i] = w[i] * V[:, i]``.
    """
    m = _as_matrix(m)
    _check_square_symmetric(m, "sym_eig input")
    n = m.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    a = (m + m.T) / 2.0
    scale = float(np.linalg.norm(a))
    if scale == 0.0:
        return np.zeros(n), np.eye(n)
    diag, V, _, off = kernels.jacobi_eigh(a, _schedule(n), JACOBI_TOL * scale, JACOBI_MAX_SWEEPS)
    if off > JACOBI_TOL * scale:
        raise ConvergenceError(
            f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps (off-norm {off:.3e})"
        )
    order = np.argsort(-diag, kind="stable")
    return diag[order], np.ascontiguousarray(V[:, order])


def cholesky(m, ridge=0.0):
    """Lower-triangular L with ``L @ L.T == m + ridge * I``."""
    m = _as_matrix(m)
    _check_square_symmetric(m, "cholesky input")
    if ridge < 0:
        raise ContractError(f"ridge must be >= 0, got {ridge}")
    L, failed = kernels.cholesky_lower(np.ascontiguousarray(m), float(ridge))
    if failed >= 0:
        j = int(failed)
        d = m[j, j] + ridge - L[j, :j] @ L[j, :j]
        raise NotPositiveDefiniteError(j, float(d))
    return L


def solve_lower(L, B):
    """Solve ``L X = B`` for lower-triangular L by forward substitution."""
    L = np.asarray(L, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    vec = B.ndim == 1
    B2 = B[:, None] if vec else B
    X = np.zeros_like(B2)
    for i in range(L.shape[0]):
        X[i] = (B2[i] - L[i, :i] @ X[:i]) / L[i, i]
    return X[:, 0] if vec else X


def solve_upper(U, B):
    """Solve ``U X = B`` for upper-triangular U by back substitution."""
    U = np.asarray(U, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    vec = B.ndim == 1
    B2 = B[:, None] if vec else B
    X = np.zeros_like(B2)
    for i in range(U.shape[0] - 1, -1, -1):
        X[i] = (B2[i] - U[i, i + 1 :] @ X[i + 1 :]) / U[i, i]
    return X[:, 0] if vec else X


def _orthonormalize(U, keep):
    """Modified Gram-Schmidt (two passes) over the columns of U, in order.

    Columns where ``keep`` is False, or that turn out numerically dependent, are
    replaced by the unit vector least covered by the columns accepted so far.
    """
    p, r = U.shape
    Q = np.zeros((p, r))
    for k in range(r):
        v = U[:, k] if keep[k] else None
        if v is not None:
            start = np.linalg.norm(v)
            for _ in range(2):
                v = v - Q[:, :k] @ (Q[:, :k].T @ v)
            if not np.linalg.norm(v) > 0.5 * start:
                v = None
        if v is None:
            covered = np.sum(Q[:, :k] ** 2, axis=1)
            v = np.zeros(p)
            v[int(np.argmin(covered))] = 1.0
            for _ in range(2):
                v = v - Q[:, :k] @ (Q[:, :k].T @ v)
        Q[:, k] = v / np.linalg.norm(v)
    return Q


def thin_svd(m):
    """Thin SVD ``m = U diag(S) V^T`` with r = min(p, q) singular values, descending.

    V comes from the eigenvectors of the smaller Gram matrix. Singular values
    are then taken as the column norms of ``m V``, which keeps small ones
    accurate to about eps * ||m|| instead of sqrt(eps) * ||m||, and U is
    ``m V / S`` re-orthonormalized (completed arbitrarily on the null space).
    """
    m = _as_matrix(m)
    p, q = m.shape
    if p < q:
        U, S, V = thin_svd(m.T)
        return V, S, U
    if q == 0:
        return np.zeros((p, 0)), np.zeros(0), np.zeros((0, 0))
    _, V = sym_eig(m.T @ m)
    B = m @ V
    S = np.linalg.norm(B, axis=0)
    order = np.argsort(-S, kind="stable")
    S, V, B = S[order], np.ascontiguousarray(V[:, order]), B[:, order]
    thr = max(p, q) * np.finfo(float).eps * (S[0] if S[0] > 0 else 1.0)
    keep = S > thr
    U = np.zeros((p, q))
    U[:, keep] = B[:, keep] / S[keep]
    S = np.where(keep, S, 0.0)
    return _orthonormalize(U, keep), S, V
