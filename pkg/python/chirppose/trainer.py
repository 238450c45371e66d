"""
Mini-batch Adam training for MlpModel with optional noise injection
"""
from dataclasses import dataclass, fields
from typing import Callable, Dict, List, Optional, Tuple
import logging
import math

import numpy as np

from .errors import ConfigError, ShapeError, TrainingDivergedError
from .network import Gradients, MlpModel, loss_mse

logger = logging.getLogger(__name__)

LR_SCHEDULES = (None, "cosine", "step")

Transform = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class NoiseInjection:
    """
    Gaussian joint displacement applied to a fraction of each batch

    Attributes:
        mean_px, std_px: displacement magnitude distribution in pixels
        fraction: share of samples perturbed per batch
        max_joints: perturb 1..max_joints joints per selected sample
        canvas: (width, height) used to convert pixels to normalized units
    """
    mean_px: float = 5.0
    std_px: float = 2.0
    fraction: float = 0.5
    max_joints: int = 2
    canvas: Tuple[int, int] = (1280, 720)

    def __post_init__(self):
        if self.std_px < 0:
            raise ConfigError("std_px must be >= 0")
        if not 0.0 <= self.fraction <= 1.0:
            raise ConfigError("noise fraction must lie in [0, 1]")
        if self.max_joints < 1:
            raise ConfigError("max_joints must be >= 1")
        if min(self.canvas) <= 0:
            raise ConfigError("canvas must be positive")


@dataclass(frozen=True)
class TrainConfig:
    """
    Attributes:
        learning_rate: Adam step size
        batch_size: samples per step
        epochs: passes over the training set
        beta1, beta2, eps: Adam moments
        seed: shuffling and noise seed
        noise: optional NoiseInjection
        lr_schedule: None, 'cosine' or 'step'
    """
    learning_rate: float = 0.001
    batch_size: int = 100
    epochs: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: Optional[int] = None
    noise: Optional[NoiseInjection] = None
    lr_schedule: Optional[str] = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(f"lr_schedule must be one of {LR_SCHEDULES}")


def create_train_config(**kwargs) -> TrainConfig:
    """
    Create training configuration with sensible defaults

    Unknown keys are reported and ignored.
    """
    known = {f.name for f in fields(TrainConfig)}
    for key in sorted(set(kwargs) - known):
        logger.warning("Unknown train config parameter '%s'", key)
    return TrainConfig(**{k: v for k, v in kwargs.items() if k in known})


def displace_joints(
    inputs: np.ndarray,
    rows: np.ndarray,
    n_joints: np.ndarray,
    magnitudes_px: np.ndarray,
    canvas: Tuple[int, int],
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Move randomly chosen joints of selected rows by given pixel distances in
    uniformly random directions

    Args:
        inputs: (n, 2k) normalized x, y per joint
        rows: indices of rows to perturb
        n_joints: joints to move per selected row
        magnitudes_px: one distance per moved joint (sum of n_joints entries)
        canvas: (width, height)
        rng: random generator

    Returns:
        Perturbed copy of inputs
    """
    out = np.array(inputs, dtype=np.float64, copy=True)
    k = out.shape[1] // 2
    width, height = canvas
    pos = 0
    for row, count in zip(rows, n_joints):
        joints = rng.choice(k, size=min(int(count), k), replace=False)
        angles = rng.uniform(0.0, 2 * np.pi, size=joints.size)
        mags = magnitudes_px[pos:pos + joints.size]
        pos += joints.size
        out[row, 2 * joints] += mags * np.cos(angles) / width
        out[row, 2 * joints + 1] += mags * np.sin(angles) / height
    return out


def inject_noise(inputs: np.ndarray, noise: NoiseInjection, rng: np.random.Generator) -> np.ndarray:
    """Perturb 1..max_joints joints of a `fraction` of rows (inputs only)"""
    n = inputs.shape[0]
    count = int(round(noise.fraction * n))
    if count == 0:
        return inputs
    rows = rng.choice(n, size=count, replace=False)
    n_joints = rng.integers(1, noise.max_joints + 1, size=count)
    mags = rng.normal(noise.mean_px, noise.std_px, size=int(n_joints.sum()))
    return displace_joints(inputs, rows, n_joints, mags, noise.canvas, rng)


class Adam:
    """Adam optimizer state for one model"""

    def __init__(self, model: MlpModel, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [(np.zeros_like(l.weights), np.zeros_like(l.biases)) for l in model.layers]
        self.v = [(np.zeros_like(l.weights), np.zeros_like(l.biases)) for l in model.layers]

    def step(self, model: MlpModel, grads: Gradients, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for i, (layer, (gw, gb)) in enumerate(zip(model.layers, grads)):
            mw, mb = self.m[i]
            vw, vb = self.v[i]
            for param, g, m, v in ((layer.weights, gw, mw, vw), (layer.biases, gb, mb, vb)):
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g * g
                param -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class Trainer:
    """
    MLP trainer with epoch callbacks and history tracking

    Example:
        >>> trainer = Trainer(model, TrainConfig(epochs=20, seed=0))
        >>> history = trainer.train(
        ...     X, Y,
        ...     test=(X_test, Y_test),
        ...     on_epoch=lambda e, train, test: print(f"Epoch {e}: {train:.4f}")
        ... )
    """

    def __init__(
        self,
        model: MlpModel,
        config: Optional[TrainConfig] = None,
        transform: Optional[Transform] = None,
    ):
        """
        Args:
            model: Model to train in place
            config: Training configuration (defaults if None)
            transform: Optional (inputs, targets) -> (inputs, targets) hook run
                after noise injection and before every forward pass
        """
        self._model = model
        self._config = config or TrainConfig()
        self._transform = transform
        self._optimizer = Adam(model, self._config.beta1, self._config.beta2, self._config.eps)
        self._history: Dict[str, List[float]] = {
            "train_loss": [],
            "test_loss": [],
            "lr": [],
        }

    def _prepare(self, inputs: np.ndarray, targets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if self._transform is None:
            return inputs, targets
        return self._transform(inputs, targets)

    def evaluate(self, inputs: np.ndarray, targets: np.ndarray) -> float:
        """MSE of the model on (inputs, targets) after the transform hook"""
        x, t = self._prepare(np.asarray(inputs, dtype=np.float64), np.asarray(targets, dtype=np.float64))
        return loss_mse(self._model.forward(x), t)

    def _lr(self, epoch: int, epochs: int) -> float:
        initial = self._config.learning_rate
        schedule = self._config.lr_schedule
        if schedule == "cosine":
            min_lr = initial * 0.01
            return min_lr + (initial - min_lr) * 0.5 * (1 + math.cos(math.pi * epoch / epochs))
        if schedule == "step":
            decay_epochs = max(1, epochs // 3)
            return initial * 0.5 ** (epoch // decay_epochs)
        return initial

    def train(
        self,
        inputs: np.ndarray,
        targets: np.ndarray,
        epochs: Optional[int] = None,
        test: Optional[Tuple[np.ndarray, np.ndarray]] = None,
        on_epoch: Optional[Callable[[int, float, float], None]] = None,
        verbose: bool = True,
    ) -> Dict[str, List[float]]:
        """
        Train for multiple epochs

        Args:
            inputs, targets: (n, in) and (n, out) training arrays
            epochs: Overrides config.epochs
            test: Optional held-out (inputs, targets) reported every epoch
            on_epoch: Callback(epoch, train_loss, test_loss)
            verbose: Log one INFO line per epoch (DEBUG otherwise)

        Returns:
            Training history dictionary

        Raises:
            TrainingDivergedError: loss or parameters become non-finite
        """
        cfg = self._config
        x_all = np.asarray(inputs, dtype=np.float64)
        t_all = np.asarray(targets, dtype=np.float64)
        if x_all.ndim != 2 or t_all.ndim != 2 or x_all.shape[0] != t_all.shape[0]:
            raise ShapeError(f"inputs {x_all.shape} and targets {t_all.shape} do not pair up")
        if x_all.shape[0] == 0:
            raise ShapeError("empty training set")
        epochs = cfg.epochs if epochs is None else epochs
        rng = np.random.default_rng(cfg.seed)
        n = x_all.shape[0]
        last_finite: Optional[float] = None
        log = logger.info if verbose else logger.debug
        width = len(str(epochs))

        for epoch in range(epochs):
            lr = self._lr(epoch, epochs)
            order = rng.permutation(n)
            total, seen = 0.0, 0
            for b, lo in enumerate(range(0, n, cfg.batch_size)):
                idx = order[lo:lo + cfg.batch_size]
                xb, tb = x_all[idx], t_all[idx]
                if cfg.noise is not None:
                    xb = inject_noise(xb, cfg.noise, rng)
                xb, tb = self._prepare(xb, tb)
                loss, grads = self._model.backward(xb, tb)
                if not math.isfinite(loss):
                    raise TrainingDivergedError(epoch, b, last_finite)
                self._optimizer.step(self._model, grads, lr)
                if not self._model.is_finite():
                    raise TrainingDivergedError(epoch, b, loss)
                last_finite = loss
                total += loss * idx.size
                seen += idx.size

            train_loss = total / seen
            test_loss = self.evaluate(*test) if test is not None else float("nan")
            self._history["train_loss"].append(train_loss)
            self._history["test_loss"].append(test_loss)
            self._history["lr"].append(lr)
            log("Epoch %*d/%d [LR=%.6f] train MSE %.6f test MSE %.6f",
                width, epoch + 1, epochs, lr, train_loss, test_loss)
            if on_epoch:
                on_epoch(epoch, train_loss, test_loss)

        return self._history

    @property
    def model(self) -> MlpModel:
        return self._model

    @property
    def history(self) -> Dict[str, List[float]]:
        return self._history

    @property
    def config(self) -> TrainConfig:
        return self._config

    def __repr__(self) -> str:
        return f"<Trainer model={self._model}>"


def train(
    model: MlpModel,
    dataset: Tuple[np.ndarray, np.ndarray],
    cfg: Optional[TrainConfig] = None,
    transform: Optional[Transform] = None,
    test: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> MlpModel:
    """
    Train a copy of `model` on (inputs, targets); the input model is untouched
    """
    trained = model.copy()
    inputs, targets = dataset
    Trainer(trained, cfg, transform).train(inputs, targets, test=test, verbose=False)
    return trained


def batch_losses(model: MlpModel, inputs: np.ndarray, targets: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-sample MSE (targets default to inputs, i.e. reconstruction loss)"""
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    t = x if targets is None else np.atleast_2d(np.asarray(targets, dtype=np.float64))
    return np.mean((model.forward(x) - t) ** 2, axis=1)
