"""Signal statistics at initialization.

Closed-form moments of the rectified Gaussian, the layer-to-layer mean-field
recursion for networks built from aligned semi-orthogonal matrices, and
Monte-Carlo checks of the linear transport and of the central limit behaviour
of ``W x``.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import NonMonotoneWidths, NonpositiveSigma, UnsupportedDistribution
from .initializers import InitializerSpec, generate_alg2, initialize, make_rng

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_pdf(x):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(x))


def norm_cdf(x):
    # ndtr is accurate in both tails; no clamping needed
    return special.ndtr(x)


@dataclass(frozen=True)
class MomentPair:
    mean: float
    variance: float


def rectified_moments(mu, sigma):
    """Mean and variance of ``max(0, X)`` for ``X ~ N(mu, sigma^2)``."""
    if not sigma > 0:
        raise NonpositiveSigma(f"sigma must be positive, got {sigma}")
    a = mu / sigma
    pdf, cdf = float(norm_pdf(a)), float(norm_cdf(a))
    mean = sigma * pdf + mu * cdf
    if a > 0:
        # same expression rewritten around the upper tail Phi(-a); avoids
        # cancelling mu^2 against mean^2 when the unit is almost always active
        tail = float(norm_cdf(-a))
        g = pdf - a * tail
        var = sigma * sigma * ((1.0 - tail) + a * a * tail - a * pdf - g * g)
    else:
        var = (mu * mu + sigma * sigma) * cdf + mu * sigma * pdf - mean * mean
    return MomentPair(mean, max(var, 0.0))


@dataclass(frozen=True)
class LayerStats:
    """Statistics of one layer under the mean-field recursion.

    ``alpha`` is the rectification parameter of the layer's pre-activation,
    ``pre_mu / pre_sigma``; ``mu`` and ``sigma`` describe the post-activation.
    """
    layer_index: int
    pre_mu: float
    pre_sigma: float
    alpha: float
    mu: float
    sigma: float
    active_fraction: float
    variance_ratio: float  # sigma_l^2 / sigma_{l-1}^2


def propagate_theory(widths, mu0, sigma0):
    """Iterate the layer recursion for a ReLU network with aligned weights and zero bias.

    The pre-activation of layer ``l`` is taken as Gaussian with mean
    ``sqrt(N_{l-1}/N_l) mu_{l-1}`` and variance ``sigma_{l-1}^2``; the
    post-activation moments follow from :func:`rectified_moments`.
    """
    widths = [int(w) for w in widths]
    if len(widths) < 2:
        raise ValueError("need at least an input width and one layer width")
    if not sigma0 > 0:
        raise NonpositiveSigma(f"sigma0 must be positive, got {sigma0}")
    if any(b > a for a, b in zip(widths, widths[1:])):
        warnings.warn("widths increase somewhere; the recursion assumes N_0 >= N_1 >= ...",
                      NonMonotoneWidths, stacklevel=2)
    mu, sigma = float(mu0), float(sigma0)
    layers = []
    for l in range(1, len(widths)):
        pre_mu = math.sqrt(widths[l - 1] / widths[l]) * mu
        pre_sigma = sigma
        post = rectified_moments(pre_mu, pre_sigma)
        new_sigma = math.sqrt(post.variance)
        layers.append(LayerStats(
            layer_index=l,
            pre_mu=pre_mu,
            pre_sigma=pre_sigma,
            alpha=pre_mu / pre_sigma,
            mu=post.mean,
            sigma=new_sigma,
            active_fraction=float(norm_cdf(pre_mu / pre_sigma)),
            variance_ratio=post.variance / (sigma * sigma),
        ))
        mu, sigma = post.mean, new_sigma
        if sigma == 0.0:
            break
    return layers


@dataclass(frozen=True)
class InputDistribution:
    """I.i.d. input components: ``normal``, ``chisq`` (shifted/scaled) or ``uniform``.

    ``normal``: mu, sigma. ``chisq``: df, loc=0, scale=1. ``uniform``: low, high.
    """
    kind: str
    params: tuple = ()

    @classmethod
    def normal(cls, mu=0.0, sigma=1.0):
        return cls("normal", (float(mu), float(sigma)))

    @classmethod
    def chisq(cls, df=3, loc=0.0, scale=1.0):
        return cls("chisq", (float(df), float(loc), float(scale)))

    @classmethod
    def uniform(cls, low=0.0, high=1.0):
        return cls("uniform", (float(low), float(high)))

    @classmethod
    def parse(cls, text):
        """``chisq3``, ``normal:3,2``, ``uniform:0,1`` and the like."""
        if text.startswith("chisq") and ":" not in text:
            return cls.chisq(float(text[5:] or 3))
        name, _, args = text.partition(":")
        values = [float(v) for v in args.split(",")] if args else []
        if name in ("normal", "chisq", "uniform"):
            return getattr(cls, name)(*values)
        raise UnsupportedDistribution(f"unknown input distribution {text!r}")

    def _check(self):
        if self.kind not in ("normal", "chisq", "uniform"):
            raise UnsupportedDistribution(self.kind)

    @property
    def mean(self):
        self._check()
        if self.kind == "normal":
            return self.params[0]
        if self.kind == "chisq":
            df, loc, scale = self.params
            return loc + scale * df
        return 0.5 * (self.params[0] + self.params[1])

    @property
    def std(self):
        self._check()
        if self.kind == "normal":
            return self.params[1]
        if self.kind == "chisq":
            df, _, scale = self.params
            return abs(scale) * math.sqrt(2.0 * df)
        return (self.params[1] - self.params[0]) / math.sqrt(12.0)

    def sample(self, rng, shape):
        self._check()
        if self.kind == "normal":
            return rng.normal(self.params[0], self.params[1], size=shape)
        if self.kind == "chisq":
            df, loc, scale = self.params
            return loc + scale * rng.chisquare(df, size=shape)
        return rng.uniform(self.params[0], self.params[1], size=shape)


@dataclass(frozen=True)
class MomentReport:
    trials: int
    predicted_mean: float        # every component of E[Wx]
    predicted_variance: float    # diagonal of Cov[Wx]
    mean: np.ndarray
    cov: np.ndarray
    mean_z: float                # max |deviation| / standard error, component means
    diag_z: float                # same, diagonal covariances
    offdiag_z: float             # same, off-diagonal covariances
    max_mean_deviation: float
    max_cov_deviation: float


def empirical_transport(w, dist, trials, rng, batch=20000):
    """Monte-Carlo mean and covariance of ``W x`` against the predicted values.

    Standard errors are estimated from the same sample: ``sd/sqrt(T)`` for the
    means and ``sqrt(Var[c_i c_j]/T)`` for the covariance entries, with ``c``
    the centered outputs.
    """
    w = np.asarray(getattr(w, "w", w), dtype=np.float64)
    if trials < 10_000:
        raise ValueError("empirical_transport needs at least 10^4 trials")
    rng = make_rng(rng)
    m, n = w.shape
    mu_pred = dist.mean * math.sqrt(n / m)
    var_pred = dist.std ** 2

    s1 = np.zeros(m)
    s2 = np.zeros((m, m))
    ys = []
    for start in range(0, trials, batch):
        x = dist.sample(rng, (min(batch, trials - start), n))
        y = x @ w.T
        ys.append(y)
        s1 += y.sum(axis=0)
    y = np.concatenate(ys)
    mean = s1 / trials
    c = y - mean
    cov = c.T @ c / (trials - 1)
    c2 = c * c
    fourth = c2.T @ c2 / trials
    se_cov = np.sqrt(np.maximum(fourth - cov * cov, 0.0) / trials)
    se_mean = np.sqrt(np.diag(cov) / trials)

    dev_cov = cov - var_pred * np.eye(m)
    z_cov = np.abs(dev_cov) / se_cov
    off = ~np.eye(m, dtype=bool)
    return MomentReport(
        trials=trials,
        predicted_mean=mu_pred,
        predicted_variance=var_pred,
        mean=mean,
        cov=cov,
        mean_z=float(np.max(np.abs(mean - mu_pred) / se_mean)),
        diag_z=float(np.max(np.diag(z_cov))),
        offdiag_z=float(np.max(z_cov[off])) if m > 1 else 0.0,
        max_mean_deviation=float(np.max(np.abs(mean - mu_pred))),
        max_cov_deviation=float(np.max(np.abs(dev_cov))),
    )


def ks_statistic(samples, cdf=norm_cdf):
    """One-sample Kolmogorov-Smirnov distance to a continuous CDF."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = len(x)
    f = cdf(x)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(n) / n
    return float(max(upper.max(), lower.max()))


def clt_distance(m, n, dist, trials, rng, batch=20000):
    """KS distance of the standardized first coordinate of ``W x`` to N(0, 1).

    One aligned matrix is drawn per call. ``trials`` inputs are pushed through
    its first row only.
    """
    if trials < 100_000:
        raise ValueError("clt_distance needs at least 10^5 trials")
    rng = make_rng(rng)
    row = generate_alg2(m, n, rng).w[0]
    shift = dist.mean * math.sqrt(n / m)
    out = np.empty(trials)
    for start in range(0, trials, batch):
        k = min(batch, trials - start)
        out[start:start + k] = dist.sample(rng, (k, n)) @ row
    return ks_statistic((out - shift) / dist.std)


def dead_unit_fraction(net, inputs, mode="auto"):
    """Per hidden layer, the fraction of (unit, sample) pairs that are inactive.

    ``mode="zero"`` counts post-activations equal to 0 (the ReLU notion);
    ``mode="negative"`` counts pre-activations below 0, which is what
    "inactive" means for leaky and exponential variants. ``auto`` picks the
    first for ReLU and the second otherwise.
    """
    from .nn import activate, forward

    if mode == "auto":
        mode = "zero" if net.activation.zero_is_dead else "negative"
    cache = forward(net, inputs)
    fractions = []
    for l, y in enumerate(cache.pre[:-1]):
        if mode == "zero":
            x = activate(net.activation, y, net.slopes[l] if net.slopes else None)
            fractions.append(float(np.mean(x == 0.0)))
        else:
            fractions.append(float(np.mean(y < 0.0)))
    return np.array(fractions)


@dataclass(frozen=True)
class EmpiricalLayer:
    layer_index: int
    pre_mean: float
    pre_std: float
    post_mean: float
    post_std: float
    dead_fraction: float


def sampled_propagation(widths, dist, samples, seed, init="proposed_alg2"):
    """Push ``samples`` i.i.d. inputs through a freshly initialized ReLU network.

    Returns pooled per-layer statistics to compare with :func:`propagate_theory`.
    """
    spec = init if isinstance(init, InitializerSpec) else InitializerSpec(init, seed=seed)
    rng = make_rng(seed, 0x5A)
    x = dist.sample(rng, (samples, widths[0]))
    layers = []
    for l in range(1, len(widths)):
        w = initialize(spec, widths[l], widths[l - 1], layer=l)
        y = x @ w.T
        x = np.maximum(y, 0.0)
        layers.append(EmpiricalLayer(l, float(y.mean()), float(y.std()),
                                     float(x.mean()), float(x.std()), float(np.mean(x == 0.0))))
    return layers
