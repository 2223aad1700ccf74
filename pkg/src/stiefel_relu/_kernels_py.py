"""Pure-numpy fallback for the compiled kernels in ``_kernels.pyx``.

Same algorithm, same storage layout; each reflector is applied with one
matrix-vector product and one rank-1 update.
"""
import numpy as np


def householder_qr_t(at):
    """Thin QR of ``A`` given as ``at = A.T`` (m x n, C order), in place.

    Returns ``(qt, r)`` with ``qt = Q.T``. See the compiled version.
    """
    m, n = at.shape
    tau = np.zeros(m)
    for j in range(m):
        alpha = at[j, j]
        tail = at[j, j + 1:]
        sigma = float(tail @ tail)
        if sigma == 0.0:
            beta = alpha
        else:
            normx = np.sqrt(alpha * alpha + sigma)
            beta = -np.copysign(normx, alpha)
            tail *= 1.0 / (alpha - beta)
            tau[j] = (beta - alpha) / beta
        at[j, j] = beta
        if tau[j] != 0.0 and j + 1 < m:
            block = at[j + 1:, j:]
            w = (block[:, 0] + block[:, 1:] @ tail) * tau[j]
            block[:, 0] -= w
            block[:, 1:] -= np.outer(w, tail)

    r = np.triu(at[:, :m].T)

    qt = np.zeros((m, n))
    qt[np.arange(m), np.arange(m)] = 1.0
    for j in range(m - 1, -1, -1):
        if tau[j] == 0.0:
            continue
        v = at[j, j + 1:]
        block = qt[j:, j:]
        w = (block[:, 0] + block[:, 1:] @ v) * tau[j]
        block[:, 0] -= w
        block[:, 1:] -= np.outer(w, v)
    return qt, r
