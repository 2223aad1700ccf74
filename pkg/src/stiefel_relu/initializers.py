"""Weight matrices maximally aligned with the all-ones direction, plus baselines.

A matrix ``W`` (m x n, m <= n) is *aligned semi-orthogonal* when its rows are
orthonormal and it maps the normalized ones vector onto the normalized ones
vector, ``W xi_n = xi_m``. Such matrices maximize ``1' W 1`` over all
semi-orthogonal matrices, with optimal value ``sqrt(m n)``.

Two samplers are provided. :func:`generate_alg1` builds ``W = U V'`` from two
sign-corrected QR factorizations whose first columns are pinned to the ones
direction. :func:`generate_alg2` needs a single QR: it combines the closed-form
Cholesky factor of the centering matrix with a random frame orthogonal to the
ones vector.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDim, InvalidKind, RankDeficient
from .linalg import as_matrix, cholesky_P, qr_thin, sign_correct, xi

PROPOSED_KINDS = ("proposed_alg1", "proposed_alg2")
BASELINE_KINDS = ("he", "xavier", "orthogonal", "lee", "random")
KINDS = PROPOSED_KINDS + BASELINE_KINDS

DEFAULT_LEE_EPSILON = 1e-3


def make_rng(seed, *stream):
    """Philox generator keyed by ``seed`` and an optional stream path.

    ``make_rng(seed, layer)`` gives each layer of a network its own
    independent, reproducible stream.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, stream)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class AlignedSemiOrthogonal:
    w: np.ndarray
    m: int
    n: int

    @classmethod
    def certify(cls, w, tol=1e-10):
        """Wrap ``w`` after checking semi-orthogonality and alignment at ``tol``."""
        report = validate_membership(w, tol)
        if not (report.orthogonal and report.maps_xi_forward):
            raise ValueError(f"matrix is not aligned semi-orthogonal at tol={tol}: {report}")
        return cls(np.asarray(w), *np.shape(w))

    @property
    def objective(self):
        return alignment_score(self.w)


@dataclass(frozen=True)
class ValidationReport:
    orthogonality_residual: float   # ||W W' - I||_F
    forward_residual: float         # ||W xi_n - xi_m||_inf
    backward_residual: float        # ||W' xi_m - xi_n||_inf
    tol: float

    @property
    def orthogonal(self):
        return self.orthogonality_residual <= self.tol

    @property
    def maps_xi_forward(self):
        return self.forward_residual <= self.tol

    @property
    def maps_xi_backward(self):
        return self.backward_residual <= self.tol

    @property
    def passed(self):
        return self.orthogonal and self.maps_xi_forward and self.maps_xi_backward

    def as_dict(self):
        return {
            "orthogonality_residual": self.orthogonality_residual,
            "forward_residual": self.forward_residual,
            "backward_residual": self.backward_residual,
            "tol": self.tol,
            "orthogonal": self.orthogonal,
            "maps_xi_forward": self.maps_xi_forward,
            "maps_xi_backward": self.maps_xi_backward,
            "passed": self.passed,
        }


def validate_membership(w, tol=1e-10):
    """Residuals of the three equivalent membership conditions.

    Never raises on a failing matrix; inspect the returned report.
    """
    w = as_matrix(w, "w")
    m, n = w.shape
    if m > n:
        raise InvalidDim(f"expected m <= n, got {w.shape}")
    xm, xn = xi(m), xi(n)
    return ValidationReport(
        orthogonality_residual=float(np.linalg.norm(w @ w.T - np.eye(m))),
        forward_residual=float(np.max(np.abs(w @ xn - xm))),
        backward_residual=float(np.max(np.abs(w.T @ xm - xn))),
        tol=float(tol),
    )


def alignment_score(w):
    """Sum of all entries, i.e. ``1' W 1``."""
    return float(np.sum(w))


def _pinned_frame(first, rng, cols):
    """Sign-corrected orthonormal frame whose first column is the unit vector ``first``."""
    a = np.column_stack([first, rng.standard_normal((first.shape[0], cols))])
    return sign_correct(qr_thin(a))


def _with_resample(build, rng):
    try:
        return build(rng)
    except RankDeficient:
        # probability-zero event; one redraw, then give up
        return build(rng)


def _check_dims(m, n, min_m):
    if m < min_m or m > n:
        raise InvalidDim(f"need {min_m} <= m <= n, got m={m}, n={n}")


def generate_alg1(m, n, rng, check=True):
    """Sample ``W = U V'`` with ``U``, ``V`` pinned to the ones direction (two QRs)."""
    m, n = int(m), int(n)
    _check_dims(m, n, 2)
    rng = make_rng(rng)

    def build(g):
        u = _pinned_frame(xi(m), g, m - 1)
        v = _pinned_frame(xi(n), g, m - 1)
        return u @ v.T

    w = _with_resample(build, rng)
    return AlignedSemiOrthogonal.certify(w) if check else AlignedSemiOrthogonal(w, m, n)


def generate_alg2(m, n, rng, check=True):
    """Sample ``W = L Q + xi_m xi_n'`` using one QR of an n x m matrix.

    ``L`` is the closed-form Cholesky factor of ``I - J/m`` and the rows of
    ``Q`` are a random frame orthogonal to the ones vector, with ``xi_n'``
    moved to the last row. For ``m = 1`` the only solution ``xi_n'`` is
    returned.
    """
    m, n = int(m), int(n)
    _check_dims(m, n, 1)
    if m == 1:
        return AlignedSemiOrthogonal(xi(n)[None, :].copy(), 1, n)
    rng = make_rng(rng)
    L = cholesky_P(m)
    q = _with_resample(lambda g: _pinned_frame(xi(n), g, m - 1), rng)
    q_rows = np.vstack([q[:, 1:].T, q[:, :1].T])
    w = L @ q_rows + np.outer(xi(m), xi(n))
    return AlignedSemiOrthogonal.certify(w) if check else AlignedSemiOrthogonal(w, m, n)


@dataclass(frozen=True)
class InitializerSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidKind(f"unknown initializer {self.kind!r}; expected one of {KINDS}")
        if self.kind == "lee" and self.params.get("epsilon", DEFAULT_LEE_EPSILON) <= 0:
            raise ValueError("lee.epsilon must be positive")

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed}


def generate_baseline(spec, m, n, rng=None):
    """Baseline initializers in the ``(out, in) = (m, n)`` layout; fan-in is ``n``."""
    if spec.kind in PROPOSED_KINDS:
        raise InvalidKind(f"{spec.kind} is not a baseline; use generate_alg1/generate_alg2")
    if spec.kind not in BASELINE_KINDS:
        raise InvalidKind(spec.kind)
    m, n = int(m), int(n)
    if m < 1 or n < 1:
        raise InvalidDim(f"m and n must be positive, got {m}, {n}")
    rng = make_rng(spec.seed if rng is None else rng)

    if spec.kind == "he":
        return rng.standard_normal((m, n)) * np.sqrt(2.0 / n)
    if spec.kind == "random":
        return rng.standard_normal((m, n)) * np.sqrt(1.0 / n)
    if spec.kind == "xavier":
        bound = np.sqrt(6.0 / (m + n))
        return rng.uniform(-bound, bound, size=(m, n))
    if spec.kind == "orthogonal":
        tall = max(m, n), min(m, n)
        q = _with_resample(lambda g: sign_correct(qr_thin(g.standard_normal(tall))), rng)
        return q.T if m <= n else q
    # lee: deterministic, from the perturbed all-ones matrix at the larger size
    eps = spec.params.get("epsilon", DEFAULT_LEE_EPSILON)
    k = max(m, n)
    q = sign_correct(qr_thin(np.ones((k, k)) + eps * np.eye(k)))
    return q[:m, :n].copy()


def initialize(spec, m, n, layer=0):
    """Weight matrix for layer ``layer`` of a network, drawn from its own RNG stream.

    Proposed kinds with ``m > n`` return the transpose of an ``n x m`` member.
    """
    rng = make_rng(spec.seed, layer)
    if spec.kind.startswith("proposed") and m > n:
        # widening layer: orthonormal columns, still mapping xi_n to xi_m
        return initialize(spec, n, m, layer).T
    if spec.kind == "proposed_alg1":
        if m == 1:
            return generate_alg2(m, n, rng).w
        return generate_alg1(m, n, rng).w
    if spec.kind == "proposed_alg2":
        return generate_alg2(m, n, rng).w
    return generate_baseline(spec, m, n, rng)
