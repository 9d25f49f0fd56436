# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``. Same signatures, same math."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, hypot

cnp.import_array()

NAME = "cython"


def jacobi_schedule(n):
    from harfuse._pykernels import jacobi_schedule as _sched
    return _sched(n)


cdef double _off_norm(double[:, ::1] a, Py_ssize_t n) nogil:
    cdef double s = 0.0
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(i + 1, n):
            s += a[i, j] * a[i, j]
    return sqrt(2.0 * s)


def jacobi_eigh(a_in, const cnp.int64_t[:, :, ::1] schedule, double tol, int max_sweeps):
    cdef double[:, ::1] a = np.array(a_in, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = a.shape[0]
    v_arr = np.eye(n)
    cdef double[:, ::1] v = v_arr
    cdef Py_ssize_t r, k, i, p, q
    cdef Py_ssize_t nrounds = schedule.shape[0]
    cdef Py_ssize_t npairs = schedule.shape[1] if nrounds > 0 else 0
    cdef double app, aqq, apq, tau, t, c, s, x, y
    cdef int sweeps = 0
    cdef double off = _off_norm(a, n)
    with nogil:
        while off > tol and sweeps < max_sweeps:
            for r in range(nrounds):
                for k in range(npairs):
                    p = schedule[r, k, 0]
                    q = schedule[r, k, 1]
                    if p < 0:
                        continue
                    apq = a[p, q]
                    if apq == 0.0:
                        continue
                    app = a[p, p]
                    aqq = a[q, q]
                    tau = (aqq - app) / (2.0 * apq)
                    if tau >= 0.0:
                        t = 1.0 / (tau + hypot(1.0, tau))
                    else:
                        t = -1.0 / (-tau + hypot(1.0, tau))
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = t * c
                    for i in range(n):
                        x = a[p, i]
                        y = a[q, i]
                        a[p, i] = c * x - s * y
                        a[q, i] = s * x + c * y
                    for i in range(n):
                        x = a[i, p]
                        y = a[i, q]
                        a[i, p] = x * c - y * s
                        a[i, q] = x * s + y * c
                    for i in range(n):
                        x = v[i, p]
                        y = v[i, q]
                        v[i, p] = x * c - y * s
                        v[i, q] = x * s + y * c
            sweeps += 1
            off = _off_norm(a, n)
    diag = np.array([a[i, i] for i in range(n)], dtype=np.float64)
    return diag, v_arr, sweeps, off


def cholesky_lower(a_in, double ridge):
    cdef const double[:, ::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0]
    L_arr = np.zeros((n, n))
    cdef double[:, ::1] L = L_arr
    cdef Py_ssize_t i, j, k
    cdef double d, s
    cdef Py_ssize_t failed = -1
    with nogil:
        for j in range(n):
            d = a[j, j] + ridge
            for k in range(j):
                d -= L[j, k] * L[j, k]
            if not d > 0.0:
                failed = j
                break
            L[j, j] = sqrt(d)
            for i in range(j + 1, n):
                s = a[i, j]
                for k in range(j):
                    s -= L[i, k] * L[j, k]
                L[i, j] = s / L[j, j]
    return L_arr, failed


def conv2d_same(img_in, kernel_in):
    cdef const double[:, ::1] img = np.ascontiguousarray(img_in, dtype=np.float64)
    cdef const double complex[:, ::1] ker = np.ascontiguousarray(kernel_in, dtype=np.complex128)
    cdef Py_ssize_t H = img.shape[0], W = img.shape[1], K = ker.shape[0]
    cdef Py_ssize_t h = K // 2
    out_arr = np.zeros((H, W), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, u, v, ii, jj
    cdef double complex acc
    with nogil:
        for i in range(H):
            for j in range(W):
                acc = 0
                for u in range(K):
                    ii = i + h - u
                    if ii < 0 or ii >= H:
                        continue
                    for v in range(K):
                        jj = j + h - v
                        if jj < 0 or jj >= W:
                            continue
                        acc = acc + ker[u, v] * img[ii, jj]
                out[i, j] = acc
    return out_arr


def hinge_sgd_epoch(X_in, Y_in, order_in, double lam, W_in, b_in, long t):
    cdef const double[:, ::1] X = np.ascontiguousarray(X_in, dtype=np.float64)
    cdef const double[:, ::1] Y = np.ascontiguousarray(Y_in, dtype=np.float64)
    cdef const cnp.int64_t[::1] order = np.ascontiguousarray(order_in, dtype=np.int64)
    cdef double[:, ::1] W = W_in
    cdef double[::1] b = b_in
    cdef Py_ssize_t n = order.shape[0], d = X.shape[1], C = W.shape[0]
    cdef Py_ssize_t k, idx, c, j
    cdef double eta, decay, score, yc
    with nogil:
        for k in range(n):
            idx = order[k]
            t += 1
            eta = 1.0 / (lam * t)
            decay = 1.0 - 2.0 * eta * lam
            for c in range(C):
                score = b[c]
                for j in range(d):
                    score = score + W[c, j] * X[idx, j]
                yc = Y[idx, c]
                if yc * score < 1.0:
                    for j in range(d):
                        W[c, j] = W[c, j] * decay + eta * yc * X[idx, j]
                    b[c] = b[c] * decay + eta * yc
                else:
                    for j in range(d):
                        W[c, j] = W[c, j] * decay
                    b[c] = b[c] * decay
    return t
