import numpy as np
import pytest

from defocuskit.config import Config
from defocuskit.errors import InputError, NumericError
from defocuskit.nn.layers import (CenterChannels, Conv2D, Dense, Dropout,
                                  Flatten, MaxPool2D, ReLU, Sequential,
                                  softmax, softmax_cross_entropy)
from defocuskit.nn.network import DefocusModel, load_model, pad_to, save_model
from defocuskit.nn.training import sgd_step
from defocuskit.rng import Rng
from oracles import fd_gradient

H = 1e-4
TOL = 1e-4


def rel_err(a, b):
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-6)
    return np.abs(a - b).max() / scale


def check_layer_gradients(layer, x):
    """Central finite differences against the analytic backward pass.

    loss(x) = sum(forward(x) * dout) for a fixed random dout, so the exact
    input gradient is backward(dout) and parameter gradients land in grads().
    Only deterministic layers go through here; dropout is checked separately
    with a frozen mask.
    """
    gen = np.random.default_rng(99)
    dout = gen.normal(size=layer.forward(x, train=False).shape)

    def f():
        return float((layer.forward(x, train=False) * dout).sum())

    layer.forward(x, train=False)
    dx = layer.backward(dout)
    assert rel_err(dx, fd_gradient(f, x, H)) < TOL
    for (name, param), grad in zip(layer.params(), layer.grads()):
        num = fd_gradient(f, param, H)
        assert rel_err(grad, num) < TOL, f"param {name}"


def test_relu_forward():
    out = ReLU().forward(np.array([[-1.0, 2.0]]))
    assert np.array_equal(out, [[0.0, 2.0]])


def test_relu_gradient():
    gen = np.random.default_rng(0)
    x = gen.normal(size=(3, 7))
    x[np.abs(x) < 0.1] = 0.5  # keep away from the kink
    check_layer_gradients(ReLU(), x)


def test_center_channels_gradient():
    gen = np.random.default_rng(12)
    x = gen.normal(size=(2, 5, 5, 3))
    layer = CenterChannels()
    assert np.allclose(layer.forward(x).mean(axis=(1, 2)), 0.0, atol=1e-12)
    check_layer_gradients(layer, x)


def test_conv_identity_filter():
    conv = Conv2D(1, 3, 3)
    for c in range(3):
        conv.w[0, 0, c, c] = 1.0
    gen = np.random.default_rng(1)
    x = gen.random((2, 5, 5, 3))
    assert np.allclose(conv.forward(x), x)


def test_conv_gradients():
    gen = np.random.default_rng(2)
    conv = Conv2D(3, 2, 4)
    conv.init_params(gen)
    x = gen.normal(size=(2, 6, 6, 2))
    check_layer_gradients(conv, x)


def test_maxpool_forward_and_gradient():
    gen = np.random.default_rng(3)
    x = gen.normal(size=(2, 7, 7, 3))  # 7 = 2*3 + 1: one trailing row/col dropped
    pool = MaxPool2D(3)
    y = pool.forward(x)
    assert y.shape == (2, 2, 2, 3)
    assert y[0, 0, 0, 0] == x[0, :3, :3, 0].max()
    check_layer_gradients(pool, x)


def test_maxpool_tie_routes_to_first_cell():
    x = np.zeros((1, 3, 3, 1))
    pool = MaxPool2D(3)
    pool.forward(x)
    dx = pool.backward(np.ones((1, 1, 1, 1)))
    assert dx[0, 0, 0, 0] == 1.0
    assert dx.sum() == 1.0


def test_dense_gradients():
    gen = np.random.default_rng(4)
    layer = Dense(5, 4)
    layer.init_params(gen)
    x = gen.normal(size=(3, 5))
    check_layer_gradients(layer, x)


def test_flatten_round_trip():
    gen = np.random.default_rng(5)
    x = gen.normal(size=(2, 3, 4, 5))
    layer = Flatten()
    y = layer.forward(x)
    assert y.shape == (2, 60)
    assert np.array_equal(layer.backward(y), x)


def test_dropout_eval_is_identity():
    gen = np.random.default_rng(6)
    x = gen.normal(size=(4, 10))
    layer = Dropout(0.5)
    assert np.array_equal(layer.forward(x, train=False), x)


def test_dropout_train_scaling_preserves_expectation():
    gen = np.random.default_rng(7)
    x = np.ones((1, 2000))
    layer = Dropout(0.4)
    out = layer.forward(x, train=True, rng=gen)
    kept = out[out > 0]
    assert np.allclose(kept, 1.0 / 0.6)
    assert abs(out.mean() - 1.0) < 0.05


def test_dropout_gradient_with_frozen_mask():
    gen = np.random.default_rng(8)
    x = gen.normal(size=(3, 6))
    layer = Dropout(0.5)
    layer.forward(x, train=True, rng=gen)
    scale = layer._scale.copy()
    dout = np.random.default_rng(9).normal(size=x.shape)
    dx = layer.backward(dout)
    assert np.allclose(dx, dout * scale)


def test_dropout_requires_rng_in_train_mode():
    with pytest.raises(InputError):
        Dropout(0.5).forward(np.zeros((1, 2)), train=True)


def test_softmax_simplex():
    gen = np.random.default_rng(10)
    probs = softmax(gen.normal(size=(32, 11)) * 5)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(probs >= 0)


def test_cross_entropy_equals_minus_log_p_true():
    gen = np.random.default_rng(11)
    logits = gen.normal(size=(1, 11))
    label = np.array([4])
    loss, _ = softmax_cross_entropy(logits, label)
    assert loss == pytest.approx(-np.log(softmax(logits)[0, 4]))


def test_cross_entropy_gradient():
    gen = np.random.default_rng(12)
    logits = gen.normal(size=(5, 11))
    labels = gen.integers(0, 11, 5)

    def f():
        return softmax_cross_entropy(logits, labels)[0]

    _, dlogits = softmax_cross_entropy(logits, labels)
    num = fd_gradient(f, logits, H)
    assert rel_err(dlogits, num) < TOL


def test_full_network_gradient_through_stack():
    """End-to-end check: conv -> relu -> pool -> flatten -> dense -> loss."""
    gen = np.random.default_rng(13)
    net = Sequential([CenterChannels(), Conv2D(3, 2, 3), ReLU(), MaxPool2D(3),
                      Flatten(), Dense(12, 5)])
    for layer in net.layers:
        if isinstance(layer, (Conv2D, Dense)):
            layer.init_params(gen)
    x = gen.normal(size=(2, 8, 8, 2))
    labels = np.array([1, 3])

    def f():
        return softmax_cross_entropy(net.forward(x), labels)[0]

    loss, dlogits = softmax_cross_entropy(net.forward(x), labels)
    dx = net.backward(dlogits)
    assert rel_err(dx, fd_gradient(f, x, H)) < TOL
    conv = net.layers[1]
    assert rel_err(conv.dw, fd_gradient(f, conv.w, H)) < TOL
    assert rel_err(conv.db, fd_gradient(f, conv.b, H)) < TOL


# ---------------------------------------------------------------------------
# SGD

def test_sgd_zero_gradient_keeps_params():
    layer = Dense(3, 2)
    layer.w = np.ones((3, 2))
    layer.dw = np.zeros((3, 2))
    layer.db = np.zeros(2)
    sgd_step([layer], 0.1)
    assert np.array_equal(layer.w, np.ones((3, 2)))


def test_sgd_arithmetic():
    layer = Dense(1, 1)
    layer.w = np.array([[1.0]])
    layer.dw = np.array([[0.5]])
    layer.db = np.array([0.0])
    sgd_step([layer], 0.1)
    assert layer.w[0, 0] == pytest.approx(0.95)


def test_sgd_decreases_quadratic_loss():
    # f(w) = 0.5*(w - 3)^2; one step from w=0 must lower f
    layer = Dense(1, 1)
    layer.w = np.array([[0.0]])
    layer.db = np.array([0.0])
    layer.dw = layer.w - 3.0
    f0 = 0.5 * float(layer.w[0, 0] - 3.0) ** 2
    sgd_step([layer], 0.1)
    f1 = 0.5 * float(layer.w[0, 0] - 3.0) ** 2
    assert f1 < f0


def test_sgd_rejects_nan_gradient():
    layer = Dense(1, 1)
    layer.dw = np.array([[np.nan]])
    layer.db = np.array([0.0])
    with pytest.raises(NumericError):
        sgd_step([layer], 0.1)


# ---------------------------------------------------------------------------
# model-level behavior

def test_untrained_model_with_zero_final_layer_is_uniform():
    cfg = Config()
    model = DefocusModel(cfg).init_params(Rng(0))
    final = [l for l in model.classifier.layers if isinstance(l, Dense)][-1]
    final.w[:] = 0.0
    final.b[:] = 0.0
    gen = np.random.default_rng(14)
    _, probs = model.classify(gen.random(model.layout.encoded_dim))
    assert np.allclose(probs, 1.0 / cfg.n_labels, atol=1e-12)


def test_classify_probabilities_sum_to_one():
    cfg = Config()
    model = DefocusModel(cfg).init_params(Rng(1))
    gen = np.random.default_rng(15)
    labels, probs = model.classify_batch(gen.random((10, model.layout.encoded_dim)))
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    assert np.all((1 <= labels) & (labels <= cfg.n_labels))


def test_classify_rejects_wrong_dim():
    model = DefocusModel(Config()).init_params(Rng(2))
    with pytest.raises(InputError):
        model.classify(np.zeros(10))


def test_zero_patch_maps_to_zero_deep_feature():
    model = DefocusModel(Config()).init_params(Rng(3))
    feat = model.deep_feature(np.zeros((27, 27, 3)))
    assert np.all(feat == 0.0)
    assert feat.shape == (20,)


def test_small_patch_equals_manually_padded_input():
    model = DefocusModel(Config()).init_params(Rng(4))
    gen = np.random.default_rng(16)
    patch = gen.random((15, 15, 3))
    padded = pad_to(patch, 27)
    assert np.array_equal(model.deep_feature(patch), model.deep_feature(padded))
    assert padded[0, 0, 0] == 0.0 and np.array_equal(padded[6:21, 6:21], patch)


def test_deep_feature_nonnegative():
    model = DefocusModel(Config()).init_params(Rng(5))
    gen = np.random.default_rng(17)
    feats = model.deep_features(gen.random((4, 27, 27, 3)))
    assert np.all(feats >= 0.0)


def test_feature_net_dims_match_contract():
    model = DefocusModel(Config())
    assert model.deep_dim == 20
    assert model.layout.encoded_dim == 156
    widths = [l.out_dim for l in model.classifier.layers if isinstance(l, Dense)]
    assert widths == [300, 150, 11]


# ---------------------------------------------------------------------------
# serialization

def test_model_save_load_round_trip(tmp_path):
    model = DefocusModel(Config()).init_params(Rng(6))
    p1 = tmp_path / "m.dfkt"
    p2 = tmp_path / "m2.dfkt"
    save_model(model, str(p1))
    back = load_model(str(p1))
    save_model(back, str(p2))
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_bytes()[:8] == b"DFKT0001"


def test_load_then_classify_equals_presave_exactly(tmp_path):
    model = DefocusModel(Config()).init_params(Rng(7))
    gen = np.random.default_rng(18)
    enc = gen.random((5, model.layout.encoded_dim))
    labels_a, probs_a = model.classify_batch(enc)
    path = tmp_path / "m.dfkt"
    save_model(model, str(path))
    back = load_model(str(path))
    labels_b, probs_b = back.classify_batch(enc)
    assert np.array_equal(labels_a, labels_b)
    assert np.array_equal(probs_a, probs_b)


def test_truncated_model_rejected(tmp_path):
    model = DefocusModel(Config()).init_params(Rng(8))
    path = tmp_path / "m.dfkt"
    save_model(model, str(path))
    payload = path.read_bytes()
    bad = tmp_path / "bad.dfkt"
    bad.write_bytes(payload[:len(payload) // 2])
    with pytest.raises(InputError):
        load_model(str(bad))
    bad.write_bytes(b"WRONGMAG" + payload[8:])
    with pytest.raises(InputError):
        load_model(str(bad))
