"""MlpModel forward/backward and serialization"""
import json

import numpy as np
import pytest

from chirppose import network
from chirppose.errors import ModelFormatError, ModelVersionError, ShapeError
from chirppose.network import Layer, MlpModel


def _numeric_gradient(model, x, t, eps=1e-6):
    flat = model.parameters()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        up, down = flat.copy(), flat.copy()
        up[i] += eps
        down[i] -= eps
        lu = network.loss_mse(model.with_parameters(up).forward(x), t)
        ld = network.loss_mse(model.with_parameters(down).forward(x), t)
        grad[i] = (lu - ld) / (2 * eps)
    return grad


def test_create_shapes():
    model = MlpModel.create([24, 128, 128, 42], seed=0)
    assert model.dims == [24, 128, 128, 42]
    assert model.activations == ["relu", "relu", "identity"]
    assert model.forward(np.zeros(24)).shape == (42,)
    assert model.forward(np.zeros((5, 24))).shape == (5, 42)
    assert model.num_parameters == 24 * 128 + 128 + 128 * 128 + 128 + 128 * 42 + 42


def test_create_is_seeded():
    a = MlpModel.create([8, 4, 2], seed=3)
    b = MlpModel.create([8, 4, 2], seed=3)
    assert np.array_equal(a.parameters(), b.parameters())


def test_forward_rejects_wrong_dim():
    model = MlpModel.create([4, 3], seed=0)
    with pytest.raises(ShapeError):
        model.forward(np.zeros(5))


def test_layer_dims_must_chain():
    with pytest.raises(ShapeError):
        MlpModel([Layer(np.zeros((3, 4)), np.zeros(3)), Layer(np.zeros((2, 5)), np.zeros(2))])


def test_backward_matches_finite_differences():
    """Analytic gradients agree with central differences"""
    rng = np.random.default_rng(0)
    model = MlpModel.create([6, 5, 4, 3], seed=1)
    x = rng.normal(size=(7, 6))
    t = rng.normal(size=(7, 3))
    loss, grads = model.backward(x, t)
    analytic = np.concatenate([np.concatenate([gw.reshape(-1), gb]) for gw, gb in grads])
    assert loss == pytest.approx(network.loss_mse(model.forward(x), t))
    assert np.allclose(analytic, _numeric_gradient(model, x, t), atol=1e-6)


def _min_hidden_margin(model, x):
    a, margin = x, np.inf
    for layer in model.layers[:-1]:
        z = a @ layer.weights.T + layer.biases
        margin = min(margin, float(np.min(np.abs(z))))
        a = np.maximum(z, 0.0)
    return margin


def test_backward_on_random_networks():
    """Relative gradient error stays below 1e-4 across 100 random ReLU nets"""
    rng = np.random.default_rng(11)
    for seed in range(100):
        hidden = list(rng.integers(2, 9, size=rng.integers(1, 3)))
        dims = [int(rng.integers(2, 7))] + [int(h) for h in hidden] + [int(rng.integers(1, 5))]
        model = MlpModel.create(dims, seed=seed)
        x = rng.normal(size=(5, dims[0]))
        # keep inputs away from ReLU kinks
        while _min_hidden_margin(model, x) < 1e-3:
            x = rng.normal(size=(5, dims[0]))
        t = rng.normal(size=(5, dims[-1]))
        _, grads = model.backward(x, t)
        analytic = np.concatenate([np.concatenate([gw.reshape(-1), gb]) for gw, gb in grads])
        numeric = _numeric_gradient(model, x, t, eps=1e-5)
        scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
        assert np.linalg.norm(analytic - numeric) / scale < 1e-4, dims


def test_backward_single_vector():
    model = MlpModel.create([3, 2], seed=0)
    loss, grads = model.backward(np.ones(3), np.zeros(2))
    assert loss >= 0
    assert grads[0][0].shape == (2, 3)


def test_backward_target_shape():
    model = MlpModel.create([3, 2], seed=0)
    with pytest.raises(ShapeError):
        model.backward(np.ones((4, 3)), np.zeros((4, 3)))


def test_save_load_bit_exact(tmp_path):
    """Weights survive a JSON round trip exactly"""
    model = MlpModel.create([10, 7, 4], seed=5)
    path = tmp_path / "model.json"
    network.save(model, path)
    loaded = network.load(path)
    assert loaded.dims == model.dims
    assert loaded.activations == model.activations
    assert np.array_equal(loaded.parameters(), model.parameters())
    x = np.random.default_rng(1).normal(size=(3, 10))
    assert np.array_equal(loaded.forward(x), model.forward(x))


def test_load_rejects_future_version(tmp_path):
    doc = MlpModel.create([2, 2], seed=0).to_dict()
    doc["format_version"] = 99
    path = tmp_path / "model.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelVersionError):
        MlpModel.load(path)


def test_load_rejects_other_documents(tmp_path):
    path = tmp_path / "model.json"
    path.write_text('{"format": "something-else"}')
    with pytest.raises(ModelFormatError):
        MlpModel.load(path)
    path.write_text("not json")
    with pytest.raises(ModelFormatError):
        MlpModel.load(path)


def test_copy_is_independent():
    model = MlpModel.create([3, 3], seed=0)
    clone = model.copy()
    clone.layers[0].weights += 1.0
    assert not np.array_equal(clone.parameters(), model.parameters())
