# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: mixture loss/gradient and all-pairs sums.

Same signatures and semantics as ``_pykernels``.  Summation order is fixed
(row by row, serial) so results are reproducible run to run.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt

cnp.import_array()

cdef double LOG_2PI = 1.8378770664093453


cdef inline double _lse(double[::1] a, Py_ssize_t n) nogil:
    cdef Py_ssize_t k
    cdef double amax = a[0]
    cdef double s = 0.0
    for k in range(1, n):
        if a[k] > amax:
            amax = a[k]
    for k in range(n):
        s += exp(a[k] - amax)
    return log(s) + amax


def mixture_loss_grad(logits, means, log_diag, double eps, A, Y):
    cdef double[::1] lg = np.ascontiguousarray(logits, dtype=np.float64)
    cdef double[:, ::1] r = np.ascontiguousarray(means, dtype=np.float64)
    cdef double[:, ::1] u = np.ascontiguousarray(log_diag, dtype=np.float64)
    cdef double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, ::1] y = np.ascontiguousarray(Y, dtype=np.float64)

    cdef Py_ssize_t K = r.shape[0], d = r.shape[1]
    cdef Py_ssize_t nz = a.shape[0], ny = y.shape[0]
    cdef Py_ssize_t i, k, j

    g_logits_arr = np.zeros(K)
    g_means_arr = np.zeros((K, d))
    g_u_arr = np.zeros((K, d))
    cdef double[::1] g_lg = g_logits_arr
    cdef double[:, ::1] g_r = g_means_arr
    cdef double[:, ::1] g_u = g_u_arr

    cdef double[::1] log_alpha = np.empty(K)
    cdef double[:, ::1] S = np.empty((K, d))
    cdef double[:, ::1] inv_var = np.empty((K, d))
    cdef double[::1] norm_const = np.empty(K)
    cdef double[::1] buf = np.empty(K)

    cdef double lse_alpha, lse_row, wk, t, diff, acc_c = 0.0, acc_v = 0.0
    cdef double inv_nz = 1.0 / nz, inv_ny = 1.0 / ny
    cdef double log_eps = log(eps)

    with nogil:
        lse_alpha = _lse(lg, K)
        for k in range(K):
            log_alpha[k] = lg[k] - lse_alpha
            norm_const[k] = log_alpha[k] - 0.5 * d * (LOG_2PI + log_eps)
            for j in range(d):
                S[k, j] = exp(u[k, j])
                inv_var[k, j] = 1.0 / (eps * S[k, j])
                norm_const[k] -= 0.5 * u[k, j]

        # source side: log c(z)
        for i in range(nz):
            for k in range(K):
                t = log_alpha[k]
                for j in range(d):
                    t += r[k, j] * a[i, j] + 0.5 * eps * S[k, j] * a[i, j] * a[i, j]
                buf[k] = t
            lse_row = _lse(buf, K)
            acc_c += lse_row
            for k in range(K):
                wk = exp(buf[k] - lse_row) * inv_nz
                g_lg[k] += wk
                for j in range(d):
                    g_r[k, j] += wk * a[i, j]
                    g_u[k, j] += wk * 0.5 * eps * S[k, j] * a[i, j] * a[i, j]

        # target side: log v(y)
        for i in range(ny):
            for k in range(K):
                t = 0.0
                for j in range(d):
                    diff = y[i, j] - r[k, j]
                    t += diff * diff * inv_var[k, j]
                buf[k] = norm_const[k] - 0.5 * t
            lse_row = _lse(buf, K)
            acc_v += lse_row
            for k in range(K):
                wk = exp(buf[k] - lse_row) * inv_ny
                g_lg[k] -= wk
                for j in range(d):
                    diff = y[i, j] - r[k, j]
                    g_r[k, j] -= wk * diff * inv_var[k, j]
                    g_u[k, j] -= wk * 0.5 * (diff * diff * inv_var[k, j] - 1.0)

    return acc_c * inv_nz - acc_v * inv_ny, g_logits_arr, g_means_arr, g_u_arr


def mean_pairwise_distance(X, Y):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] y = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], m = y.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j, c
    cdef double total = 0.0, row, s, diff
    with nogil:
        for i in range(n):
            row = 0.0
            for j in range(m):
                s = 0.0
                for c in range(d):
                    diff = x[i, c] - y[j, c]
                    s += diff * diff
                row += sqrt(s)
            total += row
    return total / (<double>n * <double>m)


def mean_pairwise_gaussian(X, Y, double gamma):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] y = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], m = y.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j, c
    cdef double total = 0.0, row, s, diff
    with nogil:
        for i in range(n):
            row = 0.0
            for j in range(m):
                s = 0.0
                for c in range(d):
                    diff = x[i, c] - y[j, c]
                    s += diff * diff
                row += exp(-gamma * s)
            total += row
    return total / (<double>n * <double>m)
