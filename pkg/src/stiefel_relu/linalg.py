"""Dense linear-algebra kernels used by the matrix constructions.

The Householder QR runs in a compiled Cython kernel when the extension was
built, and in an equivalent numpy implementation otherwise. Set the
environment variable ``STIEFEL_RELU_PURE_PYTHON=1`` before import to force
the fallback.
"""
import os
from typing import NamedTuple

import numpy as np

from . import _kernels_py
from .errors import InvalidDim, RankDeficient, ShapeMismatch, ZeroDiagonal

try:
    if os.environ.get("STIEFEL_RELU_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _kernels as _kernels_ext
except ImportError:
    _kernels_ext = None

BACKENDS = {"python": _kernels_py}
if _kernels_ext is not None:
    BACKENDS["cython"] = _kernels_ext
DEFAULT_BACKEND = "cython" if _kernels_ext is not None else "python"

RANK_TOL = 1e-12


class QrFactors(NamedTuple):
    q: np.ndarray
    r: np.ndarray


def xi(k):
    """Normalized all-ones vector of length ``k``."""
    return np.full(k, 1.0 / np.sqrt(k))


def as_matrix(a, name="a"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or Inf")
    return a


def qr_thin(a, backend=None):
    """Thin Householder QR factorization of a tall matrix.

    Parameters
    ----------
    a : (n, m) array_like
        Input with ``n >= m >= 1``.
    backend : {"cython", "python"}, optional
        Kernel to use. Defaults to the compiled one when available.

    Returns
    -------
    QrFactors
        ``q`` is n x m with orthonormal columns, ``r`` is m x m upper
        triangular, ``a = q @ r``. The diagonal of ``r`` follows the
        Householder sign convention and may be negative; see
        :func:`sign_correct`.

    Raises
    ------
    RankDeficient
        If some ``|r_ii| < 1e-12``.
    """
    a = as_matrix(a)
    n, m = a.shape
    if m < 1 or n < m:
        raise InvalidDim(f"qr_thin needs n >= m >= 1, got shape {a.shape}")
    kernel = BACKENDS[backend or DEFAULT_BACKEND]
    at = np.array(a.T, dtype=np.float64, order="C")
    qt, r = kernel.householder_qr_t(at)
    d = np.abs(np.diag(r))
    if np.any(d < RANK_TOL):
        i = int(np.argmin(d))
        raise RankDeficient(f"|r[{i},{i}]| = {d[i]:.3e} is below {RANK_TOL}")
    return QrFactors(np.ascontiguousarray(qt.T), r)


def sign_correct(f):
    """Flip the columns of ``q`` so that the implied ``r`` has a positive diagonal.

    Returns ``q @ diag(sign(r_ii))``. If the first column of the factored
    matrix was a unit vector, the first returned column equals it.
    """
    q, r = f
    d = np.diag(r)
    if np.any(d == 0.0):
        raise ZeroDiagonal("r has a zero on its diagonal; the column signs are undefined")
    return q * np.sign(d)


def centering_matrix(m):
    """``P_m = I_m - J_m / m``, the projector onto the complement of the ones vector."""
    return np.eye(m) - np.full((m, m), 1.0 / m)


def cholesky_P(m):
    """Closed-form lower Cholesky factor of the centering matrix ``I - J/m``.

    With 1-based indices, ``L_ii = sqrt((m-i)/(m-i+1))`` for ``i < m``,
    ``L_mm = 0`` and ``L_ij = -1/sqrt((m-j+1)(m-j))`` for ``j < i``. The last
    column is identically zero since the matrix has rank ``m - 1``.
    """
    m = int(m)
    if m < 2:
        raise InvalidDim(f"cholesky_P needs m >= 2, got {m}")
    # 0-based column index j corresponds to 1-based j + 1
    j = np.arange(m, dtype=np.float64)
    below = np.zeros(m)
    below[:-1] = -np.sqrt(1.0 / ((m - j[:-1]) * (m - j[:-1] - 1.0)))
    L = np.tril(np.broadcast_to(below, (m, m)), k=-1).copy()
    L[np.arange(m), np.arange(m)] = np.sqrt((m - 1.0 - j) / (m - j))
    return L
