# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Weiszfeld geometric median and the subgradient oracle.

Semantics match ``_pykernels`` exactly; only the evaluation order of sums
differs, so results agree to rounding.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

cdef double ANCHOR_EPS = 1e-12

cdef int MODE_SYM = 0
cdef int MODE_NONSYM = 1
cdef int MODE_SQUARED = 2
cdef int P_ONE = 1
cdef int P_TWO = 2
cdef int P_INF = 3


cdef double _dist(const double[:, ::1] X, Py_ssize_t i, const double[::1] y) noexcept nogil:
    cdef Py_ssize_t k
    cdef double acc = 0.0, v
    for k in range(X.shape[1]):
        v = X[i, k] - y[k]
        acc += v * v
    return sqrt(acc)


cdef double _dist_rows(const double[:, ::1] X, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    cdef Py_ssize_t k
    cdef double acc = 0.0, v
    for k in range(X.shape[1]):
        v = X[i, k] - X[j, k]
        acc += v * v
    return sqrt(acc)


def geometric_median(X_in, w_in, double tol, Py_ssize_t max_iter):
    """Weighted geometric median of the rows of ``X``; returns ``(y, iterations)``."""
    cdef const double[:, ::1] X = np.ascontiguousarray(X_in, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, k, best_k = 0, it = 0
    cdef double f, best_f = 0.0, dij, w0, W = 0.0, r, inv, invsum, lb, rn, dot
    y_arr = np.empty(d, dtype=np.float64)
    cdef double[::1] y = y_arr
    cdef double[::1] S = np.empty(d, dtype=np.float64)
    cdef double[::1] T = np.empty(d, dtype=np.float64)
    cdef double[::1] xbar = np.zeros(d, dtype=np.float64)
    cdef bint near

    if n == 1:
        for k in range(d):
            y[k] = X[0, k]
        return y_arr, 0

    with nogil:
        for i in range(n):
            f = 0.0
            for j in range(n):
                if j != i:
                    f += w[j] * _dist_rows(X, i, j)
            if i == 0 or f < best_f:
                best_f = f
                best_k = i
        w0 = 0.0
        for k in range(d):
            S[k] = 0.0
        for j in range(n):
            dij = _dist_rows(X, best_k, j)
            if dij > ANCHOR_EPS:
                for k in range(d):
                    S[k] += w[j] * (X[best_k, k] - X[j, k]) / dij
            else:
                w0 += w[j]
        r = 0.0
        for k in range(d):
            r += S[k] * S[k]
    if sqrt(r) <= w0:
        for k in range(d):
            y[k] = X[best_k, k]
        return y_arr, 0

    with nogil:
        for j in range(n):
            W += w[j]
            for k in range(d):
                xbar[k] += w[j] * X[j, k]
        for k in range(d):
            xbar[k] /= W
            y[k] = xbar[k]
        while it < max_iter:
            it += 1
            near = False
            w0 = 0.0
            for j in range(n):
                if _dist(X, j, y) <= ANCHOR_EPS:
                    near = True
                    w0 += w[j]
            for k in range(d):
                S[k] = 0.0
                T[k] = 0.0
            invsum = 0.0
            f = 0.0
            for j in range(n):
                dij = _dist(X, j, y)
                if dij <= ANCHOR_EPS:
                    continue
                inv = w[j] / dij
                invsum += inv
                f += w[j] * dij
                for k in range(d):
                    T[k] += inv * X[j, k]
                    S[k] += inv * (X[j, k] - y[k])
            rn = 0.0
            for k in range(d):
                T[k] /= invsum
                rn += S[k] * S[k]
            rn = sqrt(rn)
            if near:
                if rn <= w0:
                    break
                for k in range(d):
                    y[k] = (1.0 - w0 / rn) * T[k] + (w0 / rn) * y[k]
                continue
            dot = 0.0
            for k in range(d):
                dot += S[k] * (y[k] - xbar[k])
            lb = (f + dot) / (1.0 + rn / W)
            if f - lb <= tol * f:
                break
            for k in range(d):
                y[k] = T[k]
    return y_arr, it


cdef double _objective_subgradient(
        const double[::1] x, const double[:, ::1] P, const double[:, ::1] Q,
        int mode, int pcode, bint use_t, bint use_s,
        const double[:, ::1] CP, const double[:, ::1] CQ, double lam,
        double[::1] g, double[::1] a, double[::1] b, double[:, ::1] L,
        double[:, ::1] M) noexcept nogil:
    cdef Py_ssize_t d = P.shape[0], n = P.shape[1]
    cdef Py_ssize_t i, k, l, j, m = g.shape[0]
    cdef Py_ssize_t toff = d * d
    cdef Py_ssize_t soff = d * d + (d if use_t else 0)
    cdef double f = 0.0, na, nb, ca, cb, r, acc, nl
    cdef bint sym = mode != MODE_NONSYM

    for k in range(m):
        g[k] = 0.0
    for i in range(n):
        na = 0.0
        for k in range(d):
            acc = -Q[k, i]
            for l in range(d):
                acc += x[k * d + l] * P[l, i]
            if use_t:
                acc += x[toff + k]
            a[k] = acc
            na += acc * acc
        na = sqrt(na)
        nb = 0.0
        if sym:
            for l in range(d):
                acc = -P[l, i]
                for k in range(d):
                    acc += x[k * d + l] * Q[k, i]
                if use_s:
                    acc += x[soff + l]
                b[l] = acc
                nb += acc * acc
            nb = sqrt(nb)
        ca = 0.0
        cb = 0.0
        if mode == MODE_NONSYM:
            f += na
            if na > 0.0:
                ca = 1.0 / na
        elif mode == MODE_SQUARED:
            f += 0.5 * (na * na + nb * nb)
            ca = 1.0
            cb = 1.0
        elif pcode == P_ONE:
            f += 0.5 * (na + nb)
            if na > 0.0:
                ca = 0.5 / na
            if nb > 0.0:
                cb = 0.5 / nb
        elif pcode == P_TWO:
            r = sqrt(0.5 * (na * na + nb * nb))
            f += r
            if r > 0.0:
                ca = 0.5 / r
                cb = ca
        else:
            if na >= nb:
                f += na
                if na > 0.0:
                    ca = 1.0 / na
            else:
                f += nb
                if nb > 0.0:
                    cb = 1.0 / nb
        for k in range(d):
            for l in range(d):
                g[k * d + l] += ca * a[k] * P[l, i]
                if sym:
                    g[k * d + l] += cb * Q[k, i] * b[l]
            if use_t:
                g[toff + k] += ca * a[k]
            if use_s and sym:
                g[soff + k] += cb * b[k]

    if lam > 0.0:
        nl = 0.0
        for k in range(d):
            for l in range(d):
                acc = 0.0
                for j in range(d):
                    acc += x[k * d + j] * CP[j, l] - CQ[k, j] * x[j * d + l]
                L[k, l] = acc
                nl += acc * acc
        nl = sqrt(nl)
        for k in range(d):
            for l in range(d):
                acc = 0.0
                for j in range(d):
                    acc += L[k, j] * CP[l, j] - CQ[j, k] * L[j, l]
                M[k, l] = acc
        if mode == MODE_SQUARED:
            f += lam * nl * nl
            for k in range(d):
                for l in range(d):
                    g[k * d + l] += 2.0 * lam * M[k, l]
        else:
            f += lam * nl
            if nl > 0.0:
                for k in range(d):
                    for l in range(d):
                        g[k * d + l] += (lam / nl) * M[k, l]
    return f


def subgradient_run(P_in, Q_in, int mode, int pcode, bint use_t, bint use_s,
                    CP_in, CQ_in, double lam, x0, double h0,
                    Py_ssize_t n_epochs, Py_ssize_t epoch_len):
    """Restarted normalized subgradient descent; returns ``(best_f, best_x)``."""
    cdef const double[:, ::1] P = np.ascontiguousarray(P_in, dtype=np.float64)
    cdef const double[:, ::1] Q = np.ascontiguousarray(Q_in, dtype=np.float64)
    cdef const double[:, ::1] CP = np.ascontiguousarray(CP_in, dtype=np.float64)
    cdef const double[:, ::1] CQ = np.ascontiguousarray(CQ_in, dtype=np.float64)
    cdef Py_ssize_t d = P.shape[0]
    x_arr = np.array(x0, dtype=np.float64)
    best_arr = x_arr.copy()
    cdef double[::1] x = x_arr
    cdef double[::1] best_x = best_arr
    cdef Py_ssize_t m = x.shape[0]
    cdef double[::1] g = np.empty(m, dtype=np.float64)
    cdef double[::1] a = np.empty(d, dtype=np.float64)
    cdef double[::1] b = np.empty(d, dtype=np.float64)
    cdef double[:, ::1] L = np.empty((d, d), dtype=np.float64)
    cdef double[:, ::1] M = np.empty((d, d), dtype=np.float64)
    cdef double best_f, f, gn, h = h0, step
    cdef Py_ssize_t e, k, j
    cdef bint done = False

    with nogil:
        best_f = _objective_subgradient(x, P, Q, mode, pcode, use_t, use_s,
                                        CP, CQ, lam, g, a, b, L, M)
        for e in range(n_epochs):
            for j in range(m):
                x[j] = best_x[j]
            for k in range(1, epoch_len + 1):
                f = _objective_subgradient(x, P, Q, mode, pcode, use_t, use_s,
                                           CP, CQ, lam, g, a, b, L, M)
                if f < best_f:
                    best_f = f
                    for j in range(m):
                        best_x[j] = x[j]
                gn = 0.0
                for j in range(m):
                    gn += g[j] * g[j]
                gn = sqrt(gn)
                if gn == 0.0:
                    done = True
                    break
                step = (h / sqrt(<double>k)) / gn
                for j in range(m):
                    x[j] -= step * g[j]
            if done:
                break
            h *= 0.5
        if not done:
            f = _objective_subgradient(x, P, Q, mode, pcode, use_t, use_s,
                                       CP, CQ, lam, g, a, b, L, M)
            if f < best_f:
                best_f = f
                for j in range(m):
                    best_x[j] = x[j]
    return best_f, best_arr
