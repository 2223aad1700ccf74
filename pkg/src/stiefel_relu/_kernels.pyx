# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Householder QR kernel.

Works on the transpose of the input so that every column of ``A`` is a
contiguous row in memory; the inner loops then stream over unit-stride data.
"""
import numpy as np

from libc.math cimport copysign, sqrt


def householder_qr_t(double[:, ::1] at):
    """Thin QR of ``A`` given as ``at = A.T`` (shape m x n, n >= m).

    ``at`` is overwritten with the Householder vectors. Returns ``(qt, r)``
    where ``qt = Q.T`` is m x n and ``r`` is m x m upper triangular with the
    LAPACK sign convention (diagonal entries may be negative).
    """
    cdef Py_ssize_t m = at.shape[0]
    cdef Py_ssize_t n = at.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double alpha, sigma, normx, beta, scale, tj, w

    tau_arr = np.zeros(m, dtype=np.float64)
    r_arr = np.zeros((m, m), dtype=np.float64)
    qt_arr = np.zeros((m, n), dtype=np.float64)
    cdef double[::1] tau = tau_arr
    cdef double[:, ::1] r = r_arr
    cdef double[:, ::1] qt = qt_arr

    with nogil:
        for j in range(m):
            alpha = at[j, j]
            sigma = 0.0
            for i in range(j + 1, n):
                sigma = sigma + at[j, i] * at[j, i]
            if sigma == 0.0:
                tau[j] = 0.0
                beta = alpha
            else:
                normx = sqrt(alpha * alpha + sigma)
                beta = -copysign(normx, alpha)
                scale = 1.0 / (alpha - beta)
                for i in range(j + 1, n):
                    at[j, i] = at[j, i] * scale
                tau[j] = (beta - alpha) / beta
            at[j, j] = beta
            tj = tau[j]
            if tj != 0.0:
                for k in range(j + 1, m):
                    w = at[k, j]
                    for i in range(j + 1, n):
                        w = w + at[j, i] * at[k, i]
                    w = w * tj
                    at[k, j] = at[k, j] - w
                    for i in range(j + 1, n):
                        at[k, i] = at[k, i] - w * at[j, i]

        for j in range(m):
            for k in range(j, m):
                r[j, k] = at[k, j]

        # accumulate Q = H_0 H_1 ... H_{m-1} applied to the first m unit vectors
        for k in range(m):
            qt[k, k] = 1.0
        for j in range(m - 1, -1, -1):
            tj = tau[j]
            if tj == 0.0:
                continue
            for k in range(j, m):
                w = qt[k, j]
                for i in range(j + 1, n):
                    w = w + at[j, i] * qt[k, i]
                w = w * tj
                qt[k, j] = qt[k, j] - w
                for i in range(j + 1, n):
                    qt[k, i] = qt[k, i] - w * at[j, i]

    return qt_arr, r_arr
