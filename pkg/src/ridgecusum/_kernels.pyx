# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def kahan_cumsum(x):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t p = xv.shape[0], n = xv.shape[1]
    out = np.zeros((p, n + 1))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    cdef double s, comp, y, t
    with nogil:
        for i in range(p):
            s = 0.0
            comp = 0.0
            for j in range(n):
                y = xv[i, j] - comp
                t = s + y
                comp = (t - s) - y
                s = t
                ov[i, j + 1] = s
    return out


cdef inline double _gram_value(const double[:, ::1] G, Py_ssize_t i1, Py_ssize_t i2,
                               Py_ssize_t i3, bint weighted) noexcept nogil:
    cdef double l1 = <double>(i2 - i1)
    cdef double l2 = <double>(i3 - i2)
    cdef double w1 = 1.0 / l1
    cdef double w3 = 1.0 / l2
    cdef double w2 = w1 + w3
    cdef double q = (w3 * w3 * G[i3, i3]
                     + w2 * w2 * G[i2, i2]
                     + w1 * w1 * G[i1, i1]
                     - 2.0 * w3 * w2 * G[i2, i3]
                     + 2.0 * w1 * w3 * G[i1, i3]
                     - 2.0 * w1 * w2 * G[i1, i2])
    if weighted:
        q = q * (l1 * l2 / (l1 + l2))
    return q


def gram_values(G, triples, bint weighted):
    cdef const double[:, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef const long long[:, ::1] tv = np.ascontiguousarray(triples, dtype=np.int64)
    cdef Py_ssize_t K = tv.shape[0], k
    out = np.empty(K)
    cdef double[::1] ov = out
    with nogil:
        for k in range(K):
            ov[k] = _gram_value(Gv, tv[k, 0], tv[k, 1], tv[k, 2], weighted)
    return out


def scan_gram_max(G, Py_ssize_t n, Py_ssize_t min_gap, bint weighted):
    cdef const double[:, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef Py_ssize_t m = min_gap
    cdef Py_ssize_t i1, i2, i3
    cdef Py_ssize_t b1 = -1, b2 = -1, b3 = -1
    cdef long long count = 0
    cdef double best = -np.inf
    cdef double v
    with nogil:
        # lexicographic order, strict improvement keeps the smallest tied triple
        for i1 in range(0, n - 2 * m + 1):
            for i2 in range(i1 + m, n - m + 1):
                for i3 in range(i2 + m, n + 1):
                    v = _gram_value(Gv, i1, i2, i3, weighted)
                    count += 1
                    if v > best:
                        best = v
                        b1 = i1
                        b2 = i2
                        b3 = i3
    return float(best), int(b1), int(b2), int(b3), int(count)


def scan_linf_max(P, Py_ssize_t n, Py_ssize_t min_gap):
    cdef const double[:, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef Py_ssize_t p = Pv.shape[0]
    cdef Py_ssize_t m = min_gap
    cdef Py_ssize_t i1, i2, i3, r
    cdef Py_ssize_t b1 = -1, b2 = -1, b3 = -1
    cdef long long count = 0
    cdef double best = -np.inf
    cdef double v, d, il, ir
    left_arr = np.empty(p)
    cdef double[::1] left = left_arr
    with nogil:
        for i1 in range(0, n - 2 * m + 1):
            for i2 in range(i1 + m, n - m + 1):
                il = 1.0 / <double>(i2 - i1)
                for r in range(p):
                    left[r] = (Pv[r, i2] - Pv[r, i1]) * il
                for i3 in range(i2 + m, n + 1):
                    ir = 1.0 / <double>(i3 - i2)
                    v = 0.0
                    for r in range(p):
                        d = (Pv[r, i3] - Pv[r, i2]) * ir - left[r]
                        if d < 0:
                            d = -d
                        if d > v:
                            v = d
                    count += 1
                    if v > best:
                        best = v
                        b1 = i1
                        b2 = i2
                        b3 = i3
    return float(best), int(b1), int(b2), int(b3), int(count)


cdef inline double _block(const double[:, :, ::1] c, Py_ssize_t b, Py_ssize_t r0,
                          Py_ssize_t r1, Py_ssize_t c0, Py_ssize_t c1) noexcept nogil:
    return c[b, r1, c1] - c[b, r0, c1] - c[b, r1, c0] + c[b, r0, c0]


def dense_sup(cum, Py_ssize_t min_gap):
    cdef const double[:, :, ::1] cv = np.ascontiguousarray(cum, dtype=np.float64)
    cdef Py_ssize_t B = cv.shape[0], r = cv.shape[1] - 1
    cdef Py_ssize_t m = min_gap
    cdef Py_ssize_t b, i1, i2, i3
    cdef double l1, l2, a, c, s, val, best
    out = np.empty(B)
    cdef double[::1] ov = out
    with nogil:
        for b in range(B):
            best = -1e300
            for i1 in range(0, r - 2 * m + 1):
                for i2 in range(i1 + m, r - m + 1):
                    l1 = <double>(i2 - i1)
                    a = _block(cv, b, i1, i2, i1, i2)
                    for i3 in range(i2 + m, r + 1):
                        l2 = <double>(i3 - i2)
                        c = _block(cv, b, i2, i3, i2, i3)
                        s = _block(cv, b, i1, i2, i2, i3) + _block(cv, b, i2, i3, i1, i2)
                        val = (l1 * l2 / (l1 + l2)) * (a / (l1 * l1) - s / (l1 * l2) + c / (l2 * l2))
                        if val > best:
                            best = val
            ov[b] = best
    return out
