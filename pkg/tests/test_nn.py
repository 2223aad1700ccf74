import numpy as np
import pytest

from gradcheck import ACTIVATIONS, check, random_net
from stiefel_relu.errors import DivergedLoss, ShapeMismatch
from stiefel_relu.initializers import InitializerSpec, generate_alg2, make_rng
from stiefel_relu.nn import (
    SELU_ALPHA,
    SELU_LAMBDA,
    ActivationKind,
    AdamState,
    Mlp,
    TrainConfig,
    activate,
    adam_step,
    backward,
    build_mlp,
    evaluate,
    forward,
    mean_squared_error,
    mlp_widths,
    softmax_cross_entropy,
    train,
)


def identity_net(n, activation=None):
    return Mlp([n, n, n], [np.eye(n), np.eye(n)], [np.zeros(n), np.zeros(n)],
               activation or ActivationKind(), output="linear")


def test_forward_relu_identity():
    cache = forward(identity_net(2), np.array([-1.0, 2.0]))
    np.testing.assert_array_equal(cache.post[1], [[0.0, 2.0]])
    np.testing.assert_array_equal(cache.logits, [[0.0, 2.0]])


def test_forward_aligned_constant_input():
    m, n, c = 8, 32, 1.7
    w = generate_alg2(m, n, make_rng(0)).w
    net = Mlp([n, m], [w], [np.zeros(m)], output="linear")
    np.testing.assert_allclose(forward(net, np.full(n, c)).logits[0], c * np.sqrt(n / m),
                               rtol=1e-12)


def test_forward_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        forward(identity_net(3), np.zeros((2, 4)))


def test_mlp_validates_shapes():
    with pytest.raises(ShapeMismatch):
        Mlp([3, 2], [np.zeros((3, 2))], [np.zeros(2)])
    with pytest.raises(ShapeMismatch):
        Mlp([3, 2], [np.zeros((2, 3))], [np.zeros(3)])


@pytest.mark.parametrize("kind", ACTIVATIONS, ids=lambda k: k.name)
def test_activation_values(kind):
    y = np.array([-2.0, -0.5, 0.0, 1.5])
    out = activate(kind, y, 0.25)
    np.testing.assert_array_equal(out[y > 0], SELU_LAMBDA * y[y > 0] if kind.name == "selu"
                                  else y[y > 0])
    expected_neg = {
        "relu": 0.0 * y,
        "leaky_relu": 0.01 * y,
        "prelu": 0.25 * y,
        "elu": np.expm1(y),
        "selu": SELU_LAMBDA * SELU_ALPHA * np.expm1(y),
    }[kind.name]
    np.testing.assert_allclose(out[y < 0], expected_neg[y < 0], rtol=1e-15)


def test_activation_rejects_unknown():
    with pytest.raises(ValueError):
        ActivationKind("gelu")
    with pytest.raises(ValueError):
        ActivationKind("leaky_relu", slope=np.inf)


@pytest.mark.parametrize("kind", ACTIVATIONS, ids=lambda k: k.name)
@pytest.mark.parametrize("output", ["softmax", "linear"])
def test_gradients_finite_differences(kind, output):
    for seed in range(4):
        worst, checked, skipped = check(*random_net(kind, seed, output=output), seed=seed)
        assert worst < 1e-4
        assert checked >= 90


def test_depth10_relu_gradients():
    rng = make_rng(3)
    widths = [12] + [16] * 10 + [5]
    ws = [rng.standard_normal((widths[l + 1], widths[l])) * np.sqrt(2 / widths[l])
          for l in range(len(widths) - 1)]
    net = Mlp(widths, ws, [0.05 * rng.standard_normal(w) for w in widths[1:]])
    x, y = rng.standard_normal((8, 12)), rng.integers(0, 5, 8)
    worst, checked, _ = check(net, x, y, coords=100)
    assert worst < 1e-4 and checked >= 90


def test_zero_loss_gradient():
    net, x, _ = random_net(ActivationKind("prelu"), 1)
    cache = forward(net, x)
    g = backward(net, cache, np.zeros_like(cache.logits))
    assert all(not w.any() for w in g.weights)
    assert all(not b.any() for b in g.biases)
    assert all(s == 0 for s in g.slopes)
    assert g.global_norm() == 0.0


def test_backward_shape_mismatch():
    net = identity_net(2)
    cache = forward(net, np.ones((3, 2)))
    with pytest.raises(ShapeMismatch):
        backward(net, cache, np.ones((2, 2)))


def test_single_linear_layer_least_squares():
    rng = make_rng(0)
    x, t = rng.standard_normal((20, 4)), rng.standard_normal((20, 3))
    w, b = rng.standard_normal((3, 4)), rng.standard_normal(3)
    net = Mlp([4, 3], [w.copy()], [b.copy()], output="linear")
    cache = forward(net, x)
    _, dl = mean_squared_error(cache.logits, t)
    g = backward(net, cache, dl)
    resid = x @ w.T + b - t
    np.testing.assert_allclose(g.weights[0], 2 * resid.T @ x / resid.size, atol=1e-14)
    np.testing.assert_allclose(g.biases[0], 2 * resid.sum(axis=0) / resid.size, atol=1e-14)


def test_prelu_slope_gradient_nonzero():
    net, x, y = random_net(ActivationKind("prelu"), 5)
    cache = forward(net, x)
    assert any((p < 0).any() for p in cache.pre[:-1])
    g = backward(net, cache, softmax_cross_entropy(cache.logits, y)[1])
    assert any(s != 0 for s in g.slopes)


def test_softmax_cross_entropy_stable():
    logits = np.array([[1000.0, 0.0], [0.0, -1000.0]])
    loss, grad = softmax_cross_entropy(logits, np.array([0, 0]))
    assert np.isfinite(loss) and loss == pytest.approx(0.0)
    assert np.all(np.isfinite(grad))


def test_adam_zero_grad():
    p = [np.array([1.0, -2.0])]
    adam_step(p, [np.zeros(2)], AdamState(), lr=0.1)
    np.testing.assert_array_equal(p[0], [1.0, -2.0])


def test_adam_hand_trajectory():
    # three steps with g = 0.5, lr = 0.1, computed by hand from the update rule
    expected = [0.900000002, 0.8000000040000006, 0.7000000060000006]
    p, state = [np.array(1.0)], AdamState()
    for want in expected:
        adam_step(p, [np.array(0.5)], state, lr=0.1)
        assert float(p[0]) == pytest.approx(want, rel=1e-15, abs=1e-15)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(base_lr=0.0)
    assert TrainConfig().learning_rate(16) == pytest.approx(1e-3 / 4)
    assert TrainConfig(lr_rule="fixed").learning_rate(16) == 1e-3


def test_train_xor():
    x = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    y = np.array([0, 1, 1, 0])
    net = build_mlp(mlp_widths(2, 8, 2, 2), InitializerSpec("proposed_alg2", seed=0))
    net.biases = [b + 0.01 for b in net.biases]
    report = train(net, x, y, TrainConfig(epochs=500, batch_size=4, base_lr=0.05, seed=0))
    assert report.final.train_metric == 1.0


def test_train_deterministic():
    rng = make_rng(0)
    x, y = rng.standard_normal((100, 6)), rng.integers(0, 3, 100)
    nets = []
    for _ in range(2):
        net = build_mlp(mlp_widths(6, 8, 3, 3), InitializerSpec("proposed_alg2", seed=4),
                        ActivationKind("prelu"))
        train(net, x, y, TrainConfig(epochs=1, batch_size=16, seed=9))
        nets.append(net)
    for a, b in zip(nets[0].parameters(), nets[1].parameters()):
        np.testing.assert_array_equal(a, b)
    assert nets[0].slopes == nets[1].slopes


def test_train_report_contents():
    rng = make_rng(1)
    x, y = rng.standard_normal((64, 5)), rng.integers(0, 2, 64)
    net = build_mlp(mlp_widths(5, 6, 3, 2), InitializerSpec("he", seed=0))
    rep = train(net, x, y, TrainConfig(epochs=2, batch_size=16), x, y)
    assert [e.epoch for e in rep.epochs] == [0, 1, 2]
    assert np.isnan(rep.epochs[0].grad_norm_first)
    assert rep.final.grad_norm_first > 0 and 0 <= rep.final.dead_fraction_max <= 1
    assert rep.final.test_metric == rep.final.train_metric


def test_median_final_loss_decreases():
    rng = make_rng(2)
    x = rng.standard_normal((200, 8))
    y = (x[:, 0] + x[:, 1] > 0).astype(int)
    drops = []
    for seed in range(5):
        net = build_mlp(mlp_widths(8, 16, 4, 2), InitializerSpec("proposed_alg2", seed=seed))
        rep = train(net, x, y, TrainConfig(epochs=5, batch_size=32, seed=seed))
        drops.append(rep.epochs[0].loss - rep.final.loss)
    assert np.median(drops) > 0


def test_train_regression_and_divergence():
    rng = make_rng(3)
    x = rng.standard_normal((50, 3))
    t = x @ np.array([1.0, -2.0, 0.5])
    net = build_mlp(mlp_widths(3, 8, 2, 1), InitializerSpec("he", seed=0), output="linear")
    rep = train(net, x, t, TrainConfig(epochs=20, batch_size=10, loss="mse"))
    assert rep.metric == "rmse" and rep.final.train_metric < rep.epochs[0].train_metric
    assert evaluate(net, x, t, "regression") == rep.final.train_metric

    net = build_mlp(mlp_widths(3, 8, 2, 1), InitializerSpec("he", seed=0), output="linear")
    with pytest.raises(DivergedLoss), np.errstate(all="ignore"):
        train(net, x, t * 1e200, TrainConfig(epochs=2, batch_size=10, loss="mse"))


def test_train_label_range():
    net = build_mlp([3, 4, 2], InitializerSpec("he"))
    with pytest.raises(ValueError):
        train(net, np.zeros((4, 3)), np.array([0, 1, 2, 0]), TrainConfig(epochs=1))


def test_norm_preservation():
    w = generate_alg2(16, 40, make_rng(8)).w
    y = make_rng(9).standard_normal(16)
    assert np.linalg.norm(w.T @ y) == pytest.approx(np.linalg.norm(y), rel=1e-12)


def test_copy_is_independent():
    net = build_mlp([3, 4, 2], InitializerSpec("he"), ActivationKind("prelu"))
    twin = net.copy()
    twin.weights[0][0, 0] += 1
    twin.slopes[0] = 0.9
    assert net.weights[0][0, 0] != twin.weights[0][0, 0] and net.slopes[0] == 0.25


def test_eval_every_skips_test_metric():
    rng = make_rng(4)
    x, y = rng.standard_normal((32, 4)), rng.integers(0, 2, 32)
    full = train(build_mlp(mlp_widths(4, 4, 2, 2), InitializerSpec("he", seed=0)), x, y,
                 TrainConfig(epochs=3, batch_size=8), x, y)
    sparse = train(build_mlp(mlp_widths(4, 4, 2, 2), InitializerSpec("he", seed=0)), x, y,
                   TrainConfig(epochs=3, batch_size=8), x, y, eval_every=3)
    assert [np.isnan(e.test_metric) for e in sparse.epochs] == [False, True, True, False]
    assert sparse.final.test_metric == full.final.test_metric
    assert [e.loss for e in sparse.epochs] == [e.loss for e in full.epochs]
