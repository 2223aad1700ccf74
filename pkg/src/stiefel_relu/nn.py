"""Fully connected networks with hand-written forward/backward passes and Adam.

Batches are row-major: an input batch has shape ``(batch, N_0)`` and layer
``l`` computes ``y = x @ W_l.T + b_l`` with ``W_l`` of shape ``(N_l, N_{l-1})``.
Every hidden layer is followed by the activation; the last layer is linear
and feeds either a fused softmax cross-entropy or a squared error.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergedLoss, ShapeMismatch
from .initializers import InitializerSpec, initialize, make_rng

SELU_LAMBDA = 1.0507009873554804934193349852946
SELU_ALPHA = 1.6732632423543772848170429916717


@dataclass(frozen=True)
class ActivationKind:
    name: str = "relu"
    slope: float = 0.01          # leaky_relu
    initial_slope: float = 0.25  # prelu
    alpha: float = 1.0           # elu

    NAMES = ("relu", "leaky_relu", "prelu", "elu", "selu")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise ValueError(f"unknown activation {self.name!r}")
        for v in (self.slope, self.initial_slope, self.alpha):
            if not math.isfinite(v):
                raise ValueError("activation parameters must be finite")

    @property
    def trainable(self):
        return self.name == "prelu"

    @property
    def zero_is_dead(self):
        # only plain ReLU outputs exact zeros on the negative side
        return self.name == "relu"


def activate(kind, y, slope=None):
    if kind.name == "relu":
        return np.maximum(y, 0.0)
    if kind.name == "leaky_relu":
        return np.where(y > 0, y, kind.slope * y)
    if kind.name == "prelu":
        return np.where(y > 0, y, slope * y)
    if kind.name == "elu":
        return np.where(y > 0, y, kind.alpha * np.expm1(np.minimum(y, 0.0)))
    return SELU_LAMBDA * np.where(y > 0, y, SELU_ALPHA * np.expm1(np.minimum(y, 0.0)))


def activate_backward(kind, y, grad, slope=None):
    """Gradient w.r.t. the pre-activation ``y``, plus the slope gradient for PReLU."""
    pos = y > 0
    if kind.name == "relu":
        return grad * pos, None
    if kind.name == "leaky_relu":
        return grad * np.where(pos, 1.0, kind.slope), None
    if kind.name == "prelu":
        return grad * np.where(pos, 1.0, slope), float(np.sum(grad * np.where(pos, 0.0, y)))
    if kind.name == "elu":
        return grad * np.where(pos, 1.0, kind.alpha * np.exp(np.minimum(y, 0.0))), None
    return grad * SELU_LAMBDA * np.where(pos, 1.0, SELU_ALPHA * np.exp(np.minimum(y, 0.0))), None


@dataclass
class Mlp:
    widths: list
    weights: list
    biases: list
    activation: ActivationKind = field(default_factory=ActivationKind)
    output: str = "softmax"
    slopes: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.weights) != len(self.widths) - 1 or len(self.biases) != len(self.weights):
            raise ShapeMismatch("need one weight matrix and bias per layer")
        for l, (w, b) in enumerate(zip(self.weights, self.biases), start=1):
            if w.shape != (self.widths[l], self.widths[l - 1]) or b.shape != (self.widths[l],):
                raise ShapeMismatch(
                    f"layer {l}: weight {w.shape} / bias {b.shape} do not match widths "
                    f"{self.widths[l - 1]} -> {self.widths[l]}"
                )
        if self.activation.trainable and not self.slopes:
            self.slopes = [self.activation.initial_slope] * (len(self.weights) - 1)
        if self.output not in ("softmax", "linear"):
            raise ValueError(f"output must be 'softmax' or 'linear', got {self.output!r}")

    @property
    def depth(self):
        """Number of hidden layers."""
        return len(self.weights) - 1

    def parameters(self):
        """Flat list of trainable arrays; PReLU slopes are 0-d arrays."""
        return [*self.weights, *self.biases]

    def copy(self):
        return Mlp(
            list(self.widths),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
            self.output,
            list(self.slopes),
        )


def build_mlp(widths, init, activation=None, output="softmax"):
    """Network with weights from ``init`` (one RNG stream per layer) and zero biases."""
    if isinstance(init, str):
        init = InitializerSpec(init)
    widths = [int(w) for w in widths]
    weights = [initialize(init, widths[l], widths[l - 1], layer=l) for l in range(1, len(widths))]
    biases = [np.zeros(w) for w in widths[1:]]
    return Mlp(widths, weights, biases, activation or ActivationKind(), output)


def mlp_widths(n_in, width, depth, n_out):
    """``n_in -> width x depth -> n_out``."""
    return [n_in] + [width] * depth + [n_out]


@dataclass
class Cache:
    pre: list    # pre-activations y_1..y_L
    post: list   # x_0..x_{L-1}; post[l] feeds layer l + 1

    @property
    def logits(self):
        return self.pre[-1]


def forward(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != net.widths[0]:
        raise ShapeMismatch(f"input has {x.shape[1]} features, network expects {net.widths[0]}")
    pre, post = [], [x]
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        y = post[-1] @ w.T + b
        pre.append(y)
        if l < last:
            post.append(activate(net.activation, y, net.slopes[l] if net.slopes else None))
    return Cache(pre, post)


def predict(net, x, batch_size=4096):
    out = []
    for i in range(0, len(x), batch_size):
        out.append(forward(net, x[i:i + batch_size]).logits)
    return np.concatenate(out)


@dataclass
class Gradients:
    weights: list
    biases: list
    slopes: list

    def global_norm(self):
        sq = sum(float(np.sum(g * g)) for g in [*self.weights, *self.biases])
        return math.sqrt(sq + sum(s * s for s in self.slopes))


def backward(net, cache, loss_grad):
    """Backpropagate ``dLoss/dlogits`` through the cached forward pass."""
    delta = np.asarray(loss_grad, dtype=np.float64)
    if delta.shape != cache.logits.shape:
        raise ShapeMismatch(f"loss gradient {delta.shape} vs logits {cache.logits.shape}")
    L = len(net.weights)
    gw, gb = [None] * L, [None] * L
    gs = [0.0] * len(net.slopes)
    for l in range(L - 1, -1, -1):
        gw[l] = delta.T @ cache.post[l]
        gb[l] = delta.sum(axis=0)
        if l == 0:
            break
        upstream = delta @ net.weights[l]
        slope = net.slopes[l - 1] if net.slopes else None
        delta, gslope = activate_backward(net.activation, cache.pre[l - 1], upstream, slope)
        if gslope is not None:
            gs[l - 1] = gslope
    return Gradients(gw, gb, gs)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    idx = np.arange(len(labels))
    loss = float(np.mean(logsum - z[idx, labels]))
    grad = np.exp(z - logsum[:, None])
    grad[idx, labels] -= 1.0
    return loss, grad / len(labels)


def mean_squared_error(pred, target):
    target = np.asarray(target, dtype=np.float64).reshape(pred.shape)
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    batch_size: int = 256
    base_lr: float = 1e-3
    lr_rule: str = "sqrt_depth_scaled"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss: str = "cross_entropy"
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.base_lr > 0:
            raise ValueError("base_lr must be positive")
        if self.lr_rule not in ("sqrt_depth_scaled", "fixed"):
            raise ValueError(f"unknown lr_rule {self.lr_rule!r}")
        if self.loss not in ("cross_entropy", "mse"):
            raise ValueError(f"unknown loss {self.loss!r}")

    def learning_rate(self, depth):
        if self.lr_rule == "fixed":
            return self.base_lr
        return self.base_lr / math.sqrt(max(depth, 1))

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_metric: float
    test_metric: float
    grad_norm_first: float
    grad_norm_last: float
    dead_fraction_mean: float
    dead_fraction_max: float


@dataclass
class TrainReport:
    metric: str
    epochs: list = field(default_factory=list)

    @property
    def final(self):
        return self.epochs[-1]


def evaluate(net, x, y, task):
    """Accuracy for classification, RMSE for regression."""
    out = predict(net, x)
    if task == "classification":
        return float(np.mean(out.argmax(axis=1) == y))
    return float(np.sqrt(np.mean((out.ravel() - np.asarray(y, dtype=float)) ** 2)))


def _pack(net):
    params = net.parameters()
    if net.slopes:
        params = params + [np.array(s, dtype=float) for s in net.slopes]
    return params


def train(net, x, y, cfg, x_test=None, y_test=None, probe_size=256, eval_every=1):
    """Mini-batch Adam training in place; returns a per-epoch report.

    Epoch 0 records the state before any update. The test metric is computed
    every ``eval_every`` epochs and always after the last one; other epochs
    record NaN. Raises :class:`DivergedLoss` as soon as the training loss
    stops being finite.
    """
    from .propagation import dead_unit_fraction

    x = np.asarray(x, dtype=np.float64)
    task = "classification" if cfg.loss == "cross_entropy" else "regression"
    if task == "classification":
        y = np.asarray(y, dtype=np.int64)
        if y.min() < 0 or y.max() >= net.widths[-1]:
            raise ValueError("labels out of range for the output layer")
    loss_fn = softmax_cross_entropy if task == "classification" else mean_squared_error
    metric = "accuracy" if task == "classification" else "rmse"
    lr = cfg.learning_rate(net.depth)
    rng = make_rng(cfg.seed, 0xDA7A)
    state = AdamState(cfg.beta1, cfg.beta2, cfg.eps)
    probe = x[:probe_size]
    report = TrainReport(metric)

    def record(epoch, loss, grads):
        dead = dead_unit_fraction(net, probe)
        due = epoch % eval_every == 0 or epoch == cfg.epochs
        test_metric = evaluate(net, x_test, y_test, task) if x_test is not None and due \
            else float("nan")
        report.epochs.append(EpochRecord(
            epoch=epoch,
            loss=loss,
            train_metric=evaluate(net, x, y, task),
            test_metric=test_metric,
            grad_norm_first=float(np.linalg.norm(grads.weights[0])) if grads else float("nan"),
            grad_norm_last=float(np.linalg.norm(grads.weights[-1])) if grads else float("nan"),
            dead_fraction_mean=float(np.mean(dead)) if len(dead) else 0.0,
            dead_fraction_max=float(np.max(dead)) if len(dead) else 0.0,
        ))

    initial_loss, _ = loss_fn(predict(net, x), y)
    record(0, initial_loss, None)
    n = len(x)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total, grads = 0.0, None
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            cache = forward(net, x[idx])
            loss, dlogits = loss_fn(cache.logits, y[idx])
            if not math.isfinite(loss):
                raise DivergedLoss(f"loss became {loss} at epoch {epoch}, step {start // cfg.batch_size}")
            grads = backward(net, cache, dlogits)
            params = _pack(net)
            flat = [*grads.weights, *grads.biases, *[np.array(g) for g in grads.slopes]]
            adam_step(params, flat, state, lr)
            if net.slopes:
                net.slopes = [float(s) for s in params[len(net.weights) * 2:]]
            total += loss * len(idx)
        record(epoch, total / n, grads)
    return report
