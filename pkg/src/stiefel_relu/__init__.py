"""ReLU-aligned semi-orthogonal weight initialization and the tools to study it."""
from . import errors
from .initializers import (
    AlignedSemiOrthogonal,
    InitializerSpec,
    ValidationReport,
    alignment_score,
    generate_alg1,
    generate_alg2,
    generate_baseline,
    initialize,
    make_rng,
    validate_membership,
)
from .linalg import DEFAULT_BACKEND, centering_matrix, cholesky_P, qr_thin, sign_correct, xi
from .nn import ActivationKind, Mlp, TrainConfig, build_mlp, train
from .propagation import (
    InputDistribution,
    LayerStats,
    clt_distance,
    dead_unit_fraction,
    empirical_transport,
    propagate_theory,
    rectified_moments,
)

__version__ = "0.1.0"
