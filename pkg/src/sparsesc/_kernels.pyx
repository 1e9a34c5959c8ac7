# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled kernels for the prox step and the ADMM shrinkage.

Each kernel takes a Fortran-ordered block ``D`` of shape (n, b), the row
index ``pin[c]`` that must be zero in column ``c``, and writes the result into
``out`` (same shape and order). Semantics match :mod:`sparsesc.prox`.
"""

from libc.math cimport copysign, fabs
from libc.stdlib cimport malloc, free
from libcpp.algorithm cimport nth_element, sort
from libcpp.utility cimport pair

import numpy as np


ctypedef pair[double, Py_ssize_t] KeyIdx


cdef inline double _soft(double v, double g) noexcept nogil:
    # branch-free: max(v - g, 0) + min(v + g, 0)
    cdef double hi = v - g
    cdef double lo = v + g
    hi = hi if hi > 0.0 else 0.0
    lo = lo if lo < 0.0 else 0.0
    return hi + lo


cdef double _residual(const double* d, Py_ssize_t m, double g, double beta) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(m):
        s += _soft(d[i] - beta, g)
    return s - 1.0


cdef void _l1_affine(const double* d, Py_ssize_t m, double g,
                     double* bp, double* c) noexcept nogil:
    cdef Py_ssize_t i, lo, hi, mid, count, best
    cdef double beta, s, v, total

    if g == 0.0:
        total = 0.0
        for i in range(m):
            total += d[i]
        beta = (total - 1.0) / m
        for i in range(m):
            c[i] = d[i] - beta
        return

    # sort d once into the tail of bp, then merge d - g and d + g into the front
    cdef double* ds = bp + 2 * m
    cdef Py_ssize_t a = 0, z = 0, w = 0
    for i in range(m):
        ds[i] = d[i]
    sort(ds, ds + m)
    while w < 2 * m:
        if z >= m or (a < m and ds[a] - g <= ds[z] + g):
            bp[w] = ds[a] - g
            a += 1
        else:
            bp[w] = ds[z] + g
            z += 1
        w += 1

    lo = 0
    hi = 2 * m + 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _residual(d, m, g, bp[mid - 1]) > 0:
            lo = mid
        else:
            hi = mid
    if lo == 0:
        beta = bp[hi - 1] - 1.0
    else:
        beta = 0.5 * (bp[lo - 1] + bp[hi - 1])

    s = 0.0
    count = 0
    for i in range(m):
        v = d[i] - beta
        if v > g:
            s += d[i] - g
            count += 1
        elif v < -g:
            s += d[i] + g
            count += 1
    if count == 0:
        best = 0
        for i in range(1, m):
            if d[i] > d[best]:
                best = i
        s = d[best] - g if d[best] - beta > 0 else d[best] + g
        count = 1
    beta = (s - 1.0) / count
    for i in range(m):
        c[i] = _soft(d[i] - beta, g)


cdef void _top_k(const double* d, Py_ssize_t m, Py_ssize_t k,
                 KeyIdx* work, double* c) noexcept nogil:
    # (-|d_i|, i) ordering: larger magnitude first, lower index on ties
    cdef Py_ssize_t i
    for i in range(m):
        work[i].first = -fabs(d[i])
        work[i].second = i
        c[i] = 0.0
    if k < m:
        nth_element(work, work + k, work + m)
    for i in range(k):
        c[work[i].second] = d[work[i].second]


cdef void _gshp(const double* d, Py_ssize_t m, Py_ssize_t k,
                char* chosen, double* c) noexcept nogil:
    cdef Py_ssize_t i, size, best
    cdef double total, shift, score, best_score
    for i in range(m):
        chosen[i] = 0
        c[i] = 0.0
    best = 0
    for i in range(1, m):
        if d[i] > d[best]:
            best = i
    chosen[best] = 1
    total = d[best]
    size = 1
    while size < k:
        shift = (total - 1.0) / size
        best = -1
        best_score = -1.0
        for i in range(m):
            if chosen[i]:
                continue
            score = fabs(d[i] - shift)
            if score > best_score:
                best_score = score
                best = i
        chosen[best] = 1
        total += d[best]
        size += 1
    shift = (total - 1.0) / size
    for i in range(m):
        if chosen[i]:
            c[i] = d[i] - shift


cdef void _gather(const double[::1, :] D, Py_ssize_t col, Py_ssize_t pin,
                  double* buf) noexcept nogil:
    cdef Py_ssize_t i, r = 0
    for i in range(D.shape[0]):
        if i != pin:
            buf[r] = D[i, col]
            r += 1


cdef void _scatter(double[::1, :] out, Py_ssize_t col, Py_ssize_t pin,
                   const double* buf) noexcept nogil:
    cdef Py_ssize_t i, r = 0
    for i in range(out.shape[0]):
        if i == pin:
            out[i, col] = 0.0
        else:
            out[i, col] = buf[r]
            r += 1


def _check(D, pin, out):
    if D.shape[0] < 2:
        raise ValueError("columns must have length >= 2")
    if D.shape[1] != pin.shape[0] or out.shape[0] != D.shape[0] or out.shape[1] != D.shape[1]:
        raise ValueError("shape mismatch between block, pin indices and output")


def l1_affine_columns(const double[::1, :] D, const Py_ssize_t[::1] pin, double gamma,
                      double[::1, :] out):
    """Column-wise affine l1 prox with one pinned zero per column."""
    _check(D, pin, out)
    cdef Py_ssize_t n = D.shape[0], b = D.shape[1], m = n - 1, col
    cdef double* buf = <double*>malloc(m * sizeof(double))
    cdef double* res = <double*>malloc(m * sizeof(double))
    cdef double* bp = <double*>malloc(3 * m * sizeof(double))
    if buf == NULL or res == NULL or bp == NULL:
        free(buf); free(res); free(bp)
        raise MemoryError()
    try:
        with nogil:
            for col in range(b):
                _gather(D, col, pin[col], buf)
                _l1_affine(buf, m, gamma, bp, res)
                _scatter(out, col, pin[col], res)
    finally:
        free(buf); free(res); free(bp)


def top_k_columns(const double[::1, :] D, const Py_ssize_t[::1] pin, Py_ssize_t k,
                  double[::1, :] out):
    """Column-wise k-largest-magnitude projection with one pinned zero per column."""
    _check(D, pin, out)
    cdef Py_ssize_t n = D.shape[0], b = D.shape[1], m = n - 1, col
    if not 1 <= k <= m:
        raise ValueError(f"sparsity k must be in [1, {m}], got {k}")
    cdef double* buf = <double*>malloc(m * sizeof(double))
    cdef double* res = <double*>malloc(m * sizeof(double))
    cdef KeyIdx* work = <KeyIdx*>malloc(m * sizeof(KeyIdx))
    if buf == NULL or res == NULL or work == NULL:
        free(buf); free(res); free(work)
        raise MemoryError()
    try:
        with nogil:
            for col in range(b):
                _gather(D, col, pin[col], buf)
                _top_k(buf, m, k, work, res)
                _scatter(out, col, pin[col], res)
    finally:
        free(buf); free(res); free(work)


def gshp_columns(const double[::1, :] D, const Py_ssize_t[::1] pin, Py_ssize_t k,
                 double[::1, :] out):
    """Column-wise GSHP projection with one pinned zero per column."""
    _check(D, pin, out)
    cdef Py_ssize_t n = D.shape[0], b = D.shape[1], m = n - 1, col
    if not 1 <= k <= m:
        raise ValueError(f"sparsity k must be in [1, {m}], got {k}")
    cdef double* buf = <double*>malloc(m * sizeof(double))
    cdef double* res = <double*>malloc(m * sizeof(double))
    cdef char* chosen = <char*>malloc(m * sizeof(char))
    if buf == NULL or res == NULL or chosen == NULL:
        free(buf); free(res); free(chosen)
        raise MemoryError()
    try:
        with nogil:
            for col in range(b):
                _gather(D, col, pin[col], buf)
                _gshp(buf, m, k, chosen, res)
                _scatter(out, col, pin[col], res)
    finally:
        free(buf); free(res); free(chosen)


def admm_shrink_dual(const double[:, ::1] A, const double[:, ::1] Delta, double rho,
                     double[:, ::1] C, double[:, ::1] Delta_out):
    """Fused ADMM C-update and consensus dual ascent in one pass.

    ``C = soft(A + Delta / rho, 1 / rho)`` with a zero diagonal, then
    ``Delta_out = Delta + rho (A - C)``.
    """
    cdef Py_ssize_t n = A.shape[0], m = A.shape[1], i, j
    if (Delta.shape[0] != n or Delta.shape[1] != m or C.shape[0] != n or C.shape[1] != m
            or Delta_out.shape[0] != n or Delta_out.shape[1] != m):
        raise ValueError("shape mismatch in ADMM update")
    cdef double thr = 1.0 / rho, v, t
    with nogil:
        for i in range(n):
            for j in range(m):
                v = Delta[i, j] / rho + A[i, j]
                t = fabs(v) - thr
                t = t if t > 0.0 else 0.0
                t = copysign(t, v) + 0.0
                if i == j:
                    t = 0.0
                C[i, j] = t
                Delta_out[i, j] = (A[i, j] - t) * rho + Delta[i, j]
