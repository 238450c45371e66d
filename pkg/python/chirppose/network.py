"""
Dense feed-forward network (MlpModel) with exact backpropagation
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import json
import logging

import numpy as np

from .errors import ModelFormatError, ModelVersionError, ShapeError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "identity")
FORMAT_NAME = "chirppose-mlp"
FORMAT_VERSION = 1

Gradients = List[Tuple[np.ndarray, np.ndarray]]


@dataclass(eq=False)
class Layer:
    """Affine map followed by an activation; weights are (out, in)"""
    weights: np.ndarray
    biases: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2:
            raise ShapeError("layer weights must be a 2-D (out, in) matrix")
        if self.biases.size != self.weights.shape[0]:
            raise ShapeError(
                f"bias length {self.biases.size} != output dim {self.weights.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation '{self.activation}'")

    @property
    def in_dim(self) -> int:
        return int(self.weights.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.weights.shape[0])


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    return z


class MlpModel:
    """
    Multilayer perceptron

    Example:
        >>> model = MlpModel.create([24, 128, 128, 42], seed=0)
        >>> y = model.forward(np.zeros(24))
        >>> y.shape
        (42,)
    """

    def __init__(self, layers: Sequence[Layer], seed: Optional[int] = None):
        if not layers:
            raise ShapeError("model needs at least one layer")
        for prev, nxt in zip(layers[:-1], layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(
                    f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}"
                )
        self.layers = list(layers)
        self.seed = seed

    @classmethod
    def create(
        cls,
        dims: Sequence[int],
        activations: Optional[Sequence[str]] = None,
        seed: Optional[int] = None,
    ) -> "MlpModel":
        """
        Glorot-uniform initialized model

        Args:
            dims: Layer widths including input and output, e.g. [64, 64, 16]
            activations: One per layer (default: ReLU hidden, identity output)
            seed: Initialization seed

        Returns:
            MlpModel
        """
        dims = [int(d) for d in dims]
        if len(dims) < 2 or min(dims) < 1:
            raise ShapeError(f"invalid layer dims {dims}")
        n_layers = len(dims) - 1
        if activations is None:
            activations = ["relu"] * (n_layers - 1) + ["identity"]
        if len(activations) != n_layers:
            raise ShapeError(f"need {n_layers} activations, got {len(activations)}")
        rng = np.random.default_rng(seed)
        layers = []
        for fan_in, fan_out, act in zip(dims[:-1], dims[1:], activations):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append(Layer(
                rng.uniform(-limit, limit, size=(fan_out, fan_in)),
                np.zeros(fan_out),
                act,
            ))
        return cls(layers, seed)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def dims(self) -> List[int]:
        return [self.input_dim] + [layer.out_dim for layer in self.layers]

    @property
    def activations(self) -> List[str]:
        return [layer.activation for layer in self.layers]

    @property
    def num_parameters(self) -> int:
        return sum(layer.weights.size + layer.biases.size for layer in self.layers)

    def _check_input(self, x: np.ndarray) -> Tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        batch = x[None, :] if single else x
        if batch.ndim != 2 or batch.shape[1] != self.input_dim:
            raise ShapeError(f"expected input dim {self.input_dim}, got shape {x.shape}")
        return batch, single

    def forward(self, x: np.ndarray) -> np.ndarray:
        """
        Inference on a single vector (in,) or a batch (n, in)
        """
        batch, single = self._check_input(x)
        a = batch
        for layer in self.layers:
            a = _activate(a @ layer.weights.T + layer.biases, layer.activation)
        return a[0] if single else a

    __call__ = forward

    def backward(self, x: np.ndarray, target: np.ndarray) -> Tuple[float, Gradients]:
        """
        MSE loss and its exact gradients

        Loss is the mean over every output component of the batch. The ReLU
        subgradient at 0 is 0.

        Returns:
            (loss, [(dW, db) per layer])
        """
        batch, single = self._check_input(x)
        t = np.asarray(target, dtype=np.float64)
        t = t[None, :] if single else t
        if t.shape != (batch.shape[0], self.output_dim):
            raise ShapeError(f"target shape {t.shape} != {(batch.shape[0], self.output_dim)}")

        acts = [batch]
        pre = []
        for layer in self.layers:
            z = acts[-1] @ layer.weights.T + layer.biases
            pre.append(z)
            acts.append(_activate(z, layer.activation))

        diff = acts[-1] - t
        loss = float(np.mean(diff ** 2))
        delta = 2.0 * diff / diff.size
        grads: Gradients = [None] * len(self.layers)  # type: ignore[list-item]
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if layer.activation == "relu":
                delta = delta * (pre[i] > 0)
            grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
            if i:
                delta = delta @ layer.weights
        return loss, grads

    def parameters(self) -> np.ndarray:
        """All weights and biases as one flat vector (layer order, W then b)"""
        return np.concatenate(
            [np.concatenate([l.weights.reshape(-1), l.biases]) for l in self.layers]
        )

    def with_parameters(self, flat: np.ndarray) -> "MlpModel":
        flat = np.asarray(flat, dtype=np.float64).reshape(-1)
        if flat.size != self.num_parameters:
            raise ShapeError(f"expected {self.num_parameters} parameters, got {flat.size}")
        layers, pos = [], 0
        for l in self.layers:
            w = flat[pos:pos + l.weights.size].reshape(l.weights.shape)
            pos += l.weights.size
            b = flat[pos:pos + l.biases.size]
            pos += l.biases.size
            layers.append(Layer(w.copy(), b.copy(), l.activation))
        return MlpModel(layers, self.seed)

    def copy(self) -> "MlpModel":
        return MlpModel(
            [Layer(l.weights.copy(), l.biases.copy(), l.activation) for l in self.layers],
            self.seed,
        )

    def is_finite(self) -> bool:
        return all(
            np.all(np.isfinite(l.weights)) and np.all(np.isfinite(l.biases)) for l in self.layers
        )

    # ========== Serialization ==========

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": FORMAT_NAME,
            "format_version": FORMAT_VERSION,
            "seed": self.seed,
            "dims": self.dims,
            "activations": self.activations,
            "layers": [
                {
                    "weights": l.weights.tolist(),
                    "biases": l.biases.tolist(),
                }
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "MlpModel":
        if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
            raise ModelFormatError("not a chirppose MLP document")
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise ModelVersionError(
                f"model format version {version} is not supported (expected {FORMAT_VERSION})"
            )
        try:
            dims = [int(d) for d in doc["dims"]]
            layers = [
                Layer(np.asarray(spec["weights"], dtype=np.float64).reshape(dout, din),
                      np.asarray(spec["biases"], dtype=np.float64),
                      act)
                for spec, din, dout, act in zip(
                    doc["layers"], dims[:-1], dims[1:], doc["activations"]
                )
            ]
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"malformed model document: {e}") from e
        if len(layers) != len(dims) - 1:
            raise ModelFormatError("layer count does not match dims")
        return cls(layers, doc.get("seed"))

    def save(self, filepath: Union[str, Path]) -> None:
        """Save as versioned JSON; load(save(m)) is bit-exact"""
        with open(filepath, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, filepath: Union[str, Path]) -> "MlpModel":
        try:
            with open(filepath, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ModelFormatError(f"{filepath}: {e}") from e
        return cls.from_dict(doc)

    def __repr__(self) -> str:
        return f"<MlpModel dims={self.dims} activations={self.activations}>"


# Functional forms

def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    return model.forward(x)


def loss_mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean of squared differences over all components"""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def backward(model: MlpModel, x: np.ndarray, target: np.ndarray) -> Gradients:
    return model.backward(x, target)[1]


def save(model: MlpModel, filepath: Union[str, Path]) -> None:
    model.save(filepath)


def load(filepath: Union[str, Path]) -> MlpModel:
    return MlpModel.load(filepath)
