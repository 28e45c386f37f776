import json

import numpy as np
import pytest

from damper_twin.mlp import (
    MlpConfig, MlpModel, ModelFileError, TrainingDiverged, backward, forward, init_model,
    load_model, save_model, train,
)


def numeric_gradients(model, X, y, h=1e-5):
    """Central finite differences of the batch MSE, one parameter at a time."""
    def loss():
        return float(np.mean((model.predict(X) - y) ** 2))

    grads = []
    for param in model.weights + model.biases:
        g = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            orig = param[idx]
            param[idx] = orig + h
            up = loss()
            param[idx] = orig - h
            down = loss()
            param[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-8):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def test_init_deterministic_and_shapes():
    cfg = MlpConfig(layer_sizes=(3, 32, 32, 1), seed=4)
    a, b = init_model(cfg), init_model(cfg)
    assert [W.shape for W in a.weights] == [(3, 32), (32, 32), (32, 1)]
    for Wa, Wb in zip(a.weights, b.weights):
        assert np.array_equal(Wa, Wb)
    assert all(np.all(bias == 0) for bias in a.biases)


def test_init_weight_spread():
    model = init_model(MlpConfig(layer_sizes=(3, 32, 32, 1), seed=0))
    for W in model.weights[:2]:
        expected = (1 / np.sqrt(W.shape[0])) / np.sqrt(3)
        assert abs(W.std() - expected) < 0.3 * expected


@pytest.mark.parametrize("sizes", [(2, 4, 1), (3, 4, 2), (3, 1)])
def test_config_rejects_bad_layers(sizes):
    with pytest.raises(ValueError):
        MlpConfig(layer_sizes=sizes)


def test_zero_network_outputs_zero():
    model = init_model(MlpConfig(layer_sizes=(3, 5, 1)))
    for W in model.weights:
        W[:] = 0
    assert forward(model, [0.3, -2.0, 9.0]) == 0.0


def test_forward_matches_hand_computation():
    # 3 inputs -> 2 tanh units -> 1 linear output
    W1 = np.array([[0.5, -1.0], [0.25, 0.0], [0.0, 2.0]])
    b1 = np.array([0.1, -0.2])
    W2 = np.array([[1.5], [-0.5]])
    b2 = np.array([0.05])
    model = MlpModel([W1, W2], [b1, b2], "tanh")
    x = [0.2, 0.4, -0.1]
    h1 = np.tanh(0.5 * 0.2 + 0.25 * 0.4 + 0.1)
    h2 = np.tanh(-1.0 * 0.2 + 2.0 * -0.1 - 0.2)
    assert forward(model, x) == pytest.approx(1.5 * h1 - 0.5 * h2 + 0.05, abs=1e-15)


def test_batch_forward_equals_single():
    model = init_model(MlpConfig(seed=2))
    X = np.random.default_rng(0).random((20, 3))
    batch = model.predict(X)
    assert np.allclose(batch, [forward(model, x) for x in X], rtol=0, atol=1e-14)


def test_forward_rejects_non_finite():
    model = init_model(MlpConfig())
    with pytest.raises(ValueError):
        forward(model, [np.nan, 0, 0])


def test_output_unbounded():
    model = init_model(MlpConfig(seed=1))
    model.biases[-1][:] = 3.0
    assert forward(model, [0.5, 0.5, 0.5]) > 1.0


def test_zero_model_zero_targets_has_zero_gradient():
    model = init_model(MlpConfig(layer_sizes=(3, 6, 4, 1)))
    for W in model.weights:
        W[:] = 0
    X = np.random.default_rng(0).random((10, 3))
    gw, gb, loss = backward(model, X, np.zeros(10))
    assert loss == 0.0
    assert all(np.all(g == 0) for g in gw + gb)


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_gradients_match_finite_differences(seed, activation):
    rng = np.random.default_rng(seed)
    model = init_model(MlpConfig(layer_sizes=(3, 5, 4, 1), activation=activation, seed=seed))
    for b in model.biases:
        b[:] = rng.normal(0, 0.3, b.shape)
    X, y = rng.random((8, 3)), rng.random(8)
    gw, gb, _ = backward(model, X, y)
    assert max_relative_error(gw + gb, numeric_gradients(model, X, y)) < 1e-5


def test_batch_gradient_is_mean_of_example_gradients():
    rng = np.random.default_rng(7)
    model = init_model(MlpConfig(layer_sizes=(3, 6, 1), seed=7))
    X, y = rng.random((5, 3)), rng.random(5)
    gw, gb, _ = backward(model, X, y)
    singles = [backward(model, X[i:i + 1], y[i:i + 1]) for i in range(5)]
    for k in range(len(gw)):
        assert np.allclose(gw[k], np.mean([s[0][k] for s in singles], axis=0), atol=1e-15)
        assert np.allclose(gb[k], np.mean([s[1][k] for s in singles], axis=0), atol=1e-15)


def test_backward_empty_batch():
    with pytest.raises(ValueError):
        backward(init_model(MlpConfig()), np.zeros((0, 3)), np.zeros(0))


def linear_task(n=50, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, 3))
    return X, 0.3 * X[:, 0] + 0.1


def test_zero_learning_rate_changes_nothing():
    X, y = linear_task()
    cfg = MlpConfig(learning_rate=0.0, epochs=5, batch_size=8)
    start = init_model(cfg)
    model, history = train(start, (X, y), cfg)
    for W0, W1 in zip(start.weights, model.weights):
        assert np.array_equal(W0, W1)
    # batch order only changes the summation order of the epoch mean
    assert np.ptp(history) <= 1e-12 * history[0]


@pytest.mark.parametrize("optimizer", ["adaptive-moments", "sgd-momentum"])
def test_fits_linear_function(optimizer):
    X, y = linear_task()
    lr = 1e-2 if optimizer == "adaptive-moments" else 0.05
    cfg = MlpConfig(epochs=500, batch_size=10, learning_rate=lr, optimizer=optimizer, seed=1)
    model, history = train(init_model(cfg), (X, y), cfg)
    assert float(np.mean((model.predict(X) - y) ** 2)) < 1e-3
    assert history[99] < history[0]


def test_training_deterministic():
    X, y = linear_task()
    cfg = MlpConfig(epochs=20, batch_size=16, seed=3)
    a = train(init_model(cfg), (X, y), cfg)[1]
    b = train(init_model(cfg), (X, y), cfg)[1]
    assert a == b


def test_training_does_not_touch_input_model():
    X, y = linear_task()
    cfg = MlpConfig(epochs=3, batch_size=16)
    start = init_model(cfg)
    before = [W.copy() for W in start.weights]
    train(start, (X, y), cfg)
    assert all(np.array_equal(a, b) for a, b in zip(before, start.weights))


def test_divergence_names_epoch():
    X, y = linear_task()
    cfg = MlpConfig(epochs=50, batch_size=50, learning_rate=1e6, optimizer="sgd-momentum",
                    activation="relu")
    with pytest.raises(TrainingDiverged, match="epoch"):
        with np.errstate(all="ignore"):
            train(init_model(cfg), (X, y), cfg)


def test_early_stopping_bounds_epochs():
    X, y = linear_task(200)
    cfg = MlpConfig(epochs=300, batch_size=16, learning_rate=1e-2, early_stopping=True, patience=5)
    model, history = train(init_model(cfg), (X, y), cfg)
    assert model.metadata["epochs_run"] == len(history) <= 300


def test_different_shuffle_seed_changes_trajectory_only():
    X, y = linear_task()
    base = init_model(MlpConfig(seed=0))
    m1, h1 = train(base, (X, y), MlpConfig(seed=1, epochs=10, batch_size=8))
    m2, h2 = train(base, (X, y), MlpConfig(seed=2, epochs=10, batch_size=8))
    assert h1 != h2
    x = X[:5]
    assert np.array_equal(m1.predict(x), m1.predict(x))


def test_save_load_round_trip(tmp_path):
    model = init_model(MlpConfig(seed=5))
    model.metadata["note"] = "x"
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    X = np.random.default_rng(1).normal(size=(100, 3))
    assert np.max(np.abs(model.predict(X) - back.predict(X))) <= 1e-12
    assert back.metadata["note"] == "x"


def test_load_truncated(tmp_path):
    save_model(init_model(MlpConfig()), tmp_path / "m.json")
    text = (tmp_path / "m.json").read_text()
    (tmp_path / "bad.json").write_text(text[: len(text) // 2])
    with pytest.raises(ModelFileError, match="corrupt"):
        load_model(tmp_path / "bad.json")


def test_load_shape_mismatch(tmp_path):
    save_model(init_model(MlpConfig()), tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text())
    doc["layer_sizes"] = [3, 16, 32, 1]
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    with pytest.raises(ModelFileError, match="shapes"):
        load_model(tmp_path / "bad.json")
