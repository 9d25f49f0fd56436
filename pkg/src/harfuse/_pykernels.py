"""Pure-numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
The compiled module is preferred at import time (see ``_backend``); this one
is the fallback and the reference the benchmarks compare against.
"""
import numpy as np

NAME = "python"


def jacobi_schedule(n):
    """Round-robin pairing of ``range(n)`` into disjoint (p, q) pairs.

    Returns an int64 array of shape (rounds, pairs, 2) with p < q. Every
    unordered pair appears exactly once per sweep. Pairs within a round touch
    disjoint rows/columns, so their rotation angles do not depend on each other.
    """
    m = n + (n % 2)
    if m < 2:
        return np.zeros((0, 0, 2), dtype=np.int64)
    rounds = []
    for r in range(m - 1):
        pairs = []
        cand = [(r, m - 1)]
        for k in range(1, m // 2):
            cand.append(((r + k) % (m - 1), (r - k) % (m - 1)))
        for a, b in cand:
            if a >= n or b >= n:
                continue
            pairs.append((min(a, b), max(a, b)))
        rounds.append(pairs)
    width = max(len(p) for p in rounds)
    out = np.full((len(rounds), width, 2), -1, dtype=np.int64)
    for i, pairs in enumerate(rounds):
        if pairs:
            out[i, : len(pairs)] = pairs
    return out


def _rotation(app, aqq, apq):
    c = np.ones_like(apq)
    s = np.zeros_like(apq)
    nz = apq != 0.0
    # a tiny apq overflows tau to inf, which correctly gives t = 0
    with np.errstate(over="ignore"):
        tau = (aqq[nz] - app[nz]) / (2.0 * apq[nz])
    sgn = np.where(tau >= 0.0, 1.0, -1.0)
    t = sgn / (np.abs(tau) + np.hypot(1.0, tau))
    c[nz] = 1.0 / np.sqrt(1.0 + t * t)
    s[nz] = t * c[nz]
    return c, s


def _off_norm(a):
    return np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))


def jacobi_eigh(a, schedule, tol, max_sweeps):
    """Cyclic Jacobi on a symmetric matrix, in place on a copy.

    Returns (diagonal, eigenvectors as columns, sweeps used, final off-norm).
    Eigenvalues are not sorted.
    """
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    n = a.shape[0]
    v = np.eye(n)
    off = _off_norm(a)
    sweeps = 0
    while off > tol and sweeps < max_sweeps:
        for rnd in schedule:
            pairs = rnd[rnd[:, 0] >= 0]
            p, q = pairs[:, 0], pairs[:, 1]
            c, s = _rotation(a[p, p], a[q, q], a[p, q])
            cc, ss = c[:, None], s[:, None]
            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = cc * rp - ss * rq
            a[q, :] = ss * rp + cc * rq
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c
        sweeps += 1
        off = _off_norm(a)
    return np.diag(a).copy(), v, sweeps, off


def cholesky_lower(a, ridge):
    """Cholesky-Banachiewicz factorization of ``a + ridge*I``.

    Returns (L, failed) where ``failed`` is the 0-based pivot index whose
    value was not positive, or -1 on success.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        row = L[j, :j]
        d = a[j, j] + ridge - row @ row
        if not d > 0.0:
            return L, j
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1 :, j] = (a[j + 1 :, j] - L[j + 1 :, :j] @ row) / L[j, j]
    return L, -1


def conv2d_same(img, kernel):
    """Same-size 2-D convolution of a real image with a complex odd-sized kernel.

    ``out[i, j] = sum_{u,v} kernel[u, v] * img[i + h - u, j + h - v]`` with zero
    padding outside the image, ``h`` the kernel half-width.
    """
    img = np.asarray(img, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.complex128)
    H, W = img.shape
    K = kernel.shape[0]
    h = K // 2
    pad = np.zeros((H + 2 * h, W + 2 * h))
    pad[h : h + H, h : h + W] = img
    out = np.zeros((H, W), dtype=np.complex128)
    for u in range(K):
        for v in range(K):
            k = kernel[u, v]
            if k == 0:
                continue
            out += k * pad[2 * h - u : 2 * h - u + H, 2 * h - v : 2 * h - v + W]
    return out


def hinge_sgd_epoch(X, Y, order, lam, W, b, t):
    """One epoch of one-vs-rest hinge subgradient steps, updating W, b in place.

    Step size at global step t is 1/(lam*t); the gradient of lam*(||w||^2 + b^2)
    is 2*lam*(w, b), so every class row and intercept decays by (1 - 2/t) each
    step. Returns the step counter after the epoch.
    """
    for i in order:
        t += 1
        eta = 1.0 / (lam * t)
        x = X[i]
        y = Y[i]
        viol = y * (W @ x + b) < 1.0
        W *= 1.0 - 2.0 * eta * lam
        b *= 1.0 - 2.0 * eta * lam
        if viol.any():
            W[viol] += (eta * y[viol])[:, None] * x[None, :]
            b[viol] += eta * y[viol]
    return t
