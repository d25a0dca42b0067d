# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the LR-QR solver. See ``_kernels_py`` for semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()


def pinball_value_grad(const double[:, ::1] phi, const double[::1] s,
                       const double[::1] gamma, double alpha):
    cdef Py_ssize_t n = phi.shape[0], d = phi.shape[1], i, j
    cdef double h, diff, w, loss = 0.0
    grad = np.zeros(d)
    cdef double[::1] g = grad
    with nogil:
        for i in range(n):
            h = 0.0
            for j in range(d):
                h = h + phi[i, j] * gamma[j]
            diff = s[i] - h
            if diff >= 0:
                loss = loss + (1.0 - alpha) * diff
            else:
                loss = loss - alpha * diff
            w = alpha - 1.0 + <double>(s[i] <= h)
            for j in range(d):
                g[j] = g[j] + w * phi[i, j]
        for j in range(d):
            g[j] = g[j] / n
    return loss / n, grad


def projected_subgradient(const double[:, ::1] phi, const double[::1] s,
                          const double[:, ::1] sigma, const double[::1] mu2,
                          const double[::1] gamma0, double alpha, double lam,
                          double beta, double radius, double step0, long n_iter):
    cdef Py_ssize_t n = phi.shape[0], d = phi.shape[1], i, j, k
    cdef long t
    cdef double h, w, nrm, eta, q2 = 2.0 * lam * beta * beta, l2 = 2.0 * lam * beta
    gamma_arr = np.array(gamma0, dtype=np.float64, copy=True)
    avg_arr = np.zeros(d)
    g_arr = np.zeros(d)
    cdef double[::1] gamma = gamma_arr
    cdef double[::1] avg = avg_arr
    cdef double[::1] g = g_arr
    with nogil:
        for t in range(1, n_iter + 1):
            for j in range(d):
                g[j] = 0.0
            for i in range(n):
                h = 0.0
                for j in range(d):
                    h = h + phi[i, j] * gamma[j]
                # branch-free: the comparison is unpredictable
                w = alpha - 1.0 + <double>(s[i] <= h)
                for j in range(d):
                    g[j] = g[j] + w * phi[i, j]
            for j in range(d):
                g[j] = g[j] / n - l2 * mu2[j]
                for k in range(d):
                    g[j] = g[j] + q2 * sigma[j, k] * gamma[k]
            eta = step0 / sqrt(<double>t)
            nrm = 0.0
            for j in range(d):
                gamma[j] = gamma[j] - eta * g[j]
                nrm = nrm + gamma[j] * gamma[j]
            nrm = sqrt(nrm)
            if nrm > radius:
                for j in range(d):
                    gamma[j] = gamma[j] * (radius / nrm)
            for j in range(d):
                avg[j] = avg[j] + (gamma[j] - avg[j]) / t
    return avg_arr, gamma_arr


def line_search(const double[::1] r, const double[::1] v, const double[::1] sign,
                double slope0, double curv, double alpha, long n):
    cdef Py_ssize_t m_all = r.shape[0], i, k, e, m = 0
    cdef double a = 0.0, tk
    for i in range(m_all):
        if sign[i] > 0:
            a = a - (1.0 - alpha) * v[i]
            if v[i] > 0:
                m += 1
        elif sign[i] < 0:
            a = a + alpha * v[i]
            if v[i] < 0:
                m += 1
    a = slope0 + a / n
    empty = np.empty(0, dtype=np.intp)
    if a >= 0:
        return 0.0, empty, 0, 0
    idx_arr = np.empty(m, dtype=np.intp)
    times_arr = np.empty(m)
    cdef cnp.intp_t[::1] idx = idx_arr
    cdef double[::1] times = times_arr
    k = 0
    for i in range(m_all):
        if (sign[i] > 0 and v[i] > 0) or (sign[i] < 0 and v[i] < 0):
            idx[k] = i
            tk = r[i] / v[i]
            times[k] = tk if tk > 0 else 0.0
            k += 1
    order = np.argsort(times_arr, kind="stable")
    idx_arr = idx_arr[order]
    times_arr = times_arr[order]
    idx = idx_arr
    times = times_arr
    k = 0
    while k < m:
        tk = times[k]
        if curv > 0 and a + curv * tk > 0:
            return -a / curv, idx_arr, k, 0
        e = k
        while e < m and times[e] == tk:
            a = a + (v[idx[e]] if v[idx[e]] > 0 else -v[idx[e]]) / n
            e += 1
        if a + curv * tk >= 0:
            return tk, idx_arr, k, e - k
        k = e
    if curv > 0:
        return -a / curv, idx_arr, m, 0
    return INFINITY, idx_arr, m, 0
