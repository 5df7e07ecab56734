"""Many-to-many LSTM classifier trained by BPTT with momentum SGD"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import expit, softmax

from egoact.config import TrainConfig
from egoact.core.exceptions import DimensionMismatchError, FeatureError
from egoact.models.activity import N_CATEGORIES

logger = logging.getLogger(__name__)

GATES = ("i", "f", "o", "g")
PARAM_ORDER = (
    "W_i", "W_f", "W_o", "W_g",
    "U_i", "U_f", "U_o", "U_g",
    "b_i", "b_f", "b_o", "b_g",
    "W_out", "b_out",
)
LOG_FLOOR = 1e-12


def param_shapes(input_dim: int, hidden_units: int, n_classes: int = N_CATEGORIES) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for gate in GATES:
        shapes[f"W_{gate}"] = (input_dim, hidden_units)
    for gate in GATES:
        shapes[f"U_{gate}"] = (hidden_units, hidden_units)
    for gate in GATES:
        shapes[f"b_{gate}"] = (hidden_units,)
    shapes["W_out"] = (hidden_units, n_classes)
    shapes["b_out"] = (n_classes,)
    return shapes


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    mean_loss: float
    train_acc: float


@dataclass
class RecurrentModel:
    """LSTM cell with a dense softmax head; parameters keyed by PARAM_ORDER names"""
    input_dim: int
    hidden_units: int
    dropout_rate: float
    params: dict[str, np.ndarray]
    n_classes: int = N_CATEGORIES
    history: list[EpochRecord] = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        expected = param_shapes(self.input_dim, self.hidden_units, self.n_classes)
        if set(self.params) != set(expected):
            raise ValueError(f"Parameter names must be {PARAM_ORDER}")
        for name, shape in expected.items():
            value = np.asarray(self.params[name], dtype=np.float64)
            if value.shape != shape:
                raise ValueError(f"{name} has shape {value.shape}, expected {shape}")
            if not np.all(np.isfinite(value)):
                raise ValueError(f"{name} has non-finite entries")
            self.params[name] = value

    @classmethod
    def initialize(
        cls,
        input_dim: int,
        hidden_units: int = 32,
        rng: Optional[np.random.Generator] = None,
        dropout_rate: float = 0.5,
        n_classes: int = N_CATEGORIES,
    ) -> "RecurrentModel":
        """Uniform [-k, k] weights with k = 1/sqrt(hidden_units)"""
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / np.sqrt(hidden_units)
        params = {
            name: rng.uniform(-bound, bound, size=shape)
            for name, shape in param_shapes(input_dim, hidden_units, n_classes).items()
        }
        return cls(input_dim, hidden_units, dropout_rate, params, n_classes)

    @classmethod
    def zeros(
        cls,
        input_dim: int,
        hidden_units: int = 32,
        dropout_rate: float = 0.0,
        n_classes: int = N_CATEGORIES,
    ) -> "RecurrentModel":
        params = {name: np.zeros(shape) for name, shape in param_shapes(input_dim, hidden_units, n_classes).items()}
        return cls(input_dim, hidden_units, dropout_rate, params, n_classes)

    def copy(self) -> "RecurrentModel":
        return RecurrentModel(
            self.input_dim,
            self.hidden_units,
            self.dropout_rate,
            {name: value.copy() for name, value in self.params.items()},
            self.n_classes,
        )

    def equals(self, other: "RecurrentModel") -> bool:
        return (
            self.input_dim == other.input_dim
            and self.hidden_units == other.hidden_units
            and self.dropout_rate == other.dropout_rate
            and self.n_classes == other.n_classes
            and all(np.array_equal(self.params[n], other.params[n]) for n in PARAM_ORDER)
        )


def _dropout_mask(shape: tuple[int, ...], rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted dropout: kept units are scaled by 1/(1-rate)"""
    if rate == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _check_inputs(model: RecurrentModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise DimensionMismatchError(3, X.ndim, "recurrent input rank (batch, time, dim)")
    if X.shape[1] == 0:
        raise FeatureError("Window length must be at least 1")
    if X.shape[2] != model.input_dim:
        raise DimensionMismatchError(model.input_dim, X.shape[2], "recurrent input")
    return X


def _forward_batch(
    model: RecurrentModel,
    X: np.ndarray,
    train: bool,
    rng: Optional[np.random.Generator],
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Run the recurrence over (B, T, D) inputs; returns (B, T, K) probabilities and a cache"""
    p = model.params
    batch, steps, _ = X.shape
    hidden = model.hidden_units

    if train and model.dropout_rate > 0.0:
        if rng is None:
            raise ValueError("Training-mode dropout needs a random generator")
        mask_in = _dropout_mask(X.shape, model.dropout_rate, rng)
        mask_out = _dropout_mask((batch, steps, hidden), model.dropout_rate, rng)
    else:
        mask_in = np.ones(X.shape)
        mask_out = np.ones((batch, steps, hidden))

    cache = {
        name: np.zeros((batch, steps, hidden))
        for name in ("i", "f", "o", "g", "c", "tanh_c", "h", "h_drop")
    }
    probs = np.zeros((batch, steps, model.n_classes))
    x_drop = X * mask_in
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))

    for t in range(steps):
        x = x_drop[:, t]
        i = expit(x @ p["W_i"] + h @ p["U_i"] + p["b_i"])
        f = expit(x @ p["W_f"] + h @ p["U_f"] + p["b_f"])
        o = expit(x @ p["W_o"] + h @ p["U_o"] + p["b_o"])
        g = np.tanh(x @ p["W_g"] + h @ p["U_g"] + p["b_g"])
        c = f * c + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        h_drop = h * mask_out[:, t]
        probs[:, t] = softmax(h_drop @ p["W_out"] + p["b_out"], axis=-1)

        for name, value in (("i", i), ("f", f), ("o", o), ("g", g), ("c", c), ("tanh_c", tanh_c), ("h", h), ("h_drop", h_drop)):
            cache[name][:, t] = value

    cache["x_drop"] = x_drop
    cache["mask_out"] = mask_out
    return probs, cache


def forward(
    model: RecurrentModel,
    window: np.ndarray,
    mode: str = "eval",
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Per-step class distributions for one (T, input_dim) window"""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise DimensionMismatchError(2, window.ndim, "window rank (time, dim)")
    X = _check_inputs(model, window[None])
    probs, _ = _forward_batch(model, X, mode == "train", rng)
    return probs[0]


def predict_windows(model: RecurrentModel, X: np.ndarray) -> np.ndarray:
    """Eval-mode distributions for a (N, T, input_dim) stack of windows"""
    X = _check_inputs(model, X)
    probs, _ = _forward_batch(model, X, False, None)
    return probs


def loss(
    predictions: np.ndarray,
    targets: Sequence[int],
    weights: Optional[np.ndarray] = None,
) -> float:
    """Timestep-averaged (optionally class-weighted) cross-entropy"""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if predictions.shape[0] != targets.shape[0]:
        raise DimensionMismatchError(targets.shape[0], predictions.shape[0], "loss predictions")
    picked = predictions[np.arange(targets.shape[0]), targets]
    w = np.ones(targets.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)[targets]
    return float(-np.mean(w * np.log(np.maximum(picked, LOG_FLOOR))))


def loss_and_gradients(
    model: RecurrentModel,
    X: np.ndarray,
    Y: np.ndarray,
    weights: Optional[np.ndarray] = None,
    rng: Optional[np.random.Generator] = None,
    train: bool = False,
) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """
    Batch-mean loss, its gradient for every parameter, and the forward probabilities.

    X is (B, T, D) and Y is (B, T) integer targets.
    """
    X = _check_inputs(model, X)
    Y = np.asarray(Y, dtype=np.int64)
    if Y.shape != X.shape[:2]:
        raise DimensionMismatchError(X.shape[1], Y.shape[-1], "recurrent targets")

    p = model.params
    batch, steps, _ = X.shape
    probs, cache = _forward_batch(model, X, train, rng)

    class_w = np.ones(model.n_classes) if weights is None else np.asarray(weights, dtype=np.float64)
    w = class_w[Y]  # (B, T)
    picked = np.take_along_axis(probs, Y[..., None], axis=-1)[..., 0]
    batch_loss = float(np.mean(-np.mean(w * np.log(np.maximum(picked, LOG_FLOOR)), axis=1)))

    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, Y[..., None], 1.0, axis=-1)
    dz = (probs - onehot) * (w / (steps * batch))[..., None]

    grads = {name: np.zeros_like(value) for name, value in p.items()}
    grads["W_out"] = np.einsum("bth,btk->hk", cache["h_drop"], dz)
    grads["b_out"] = dz.sum(axis=(0, 1))
    dh_out = (dz @ p["W_out"].T) * cache["mask_out"]

    dh_next = np.zeros((batch, model.hidden_units))
    dc_next = np.zeros((batch, model.hidden_units))
    for t in reversed(range(steps)):
        i, f, o, g = (cache[name][:, t] for name in GATES)
        tanh_c = cache["tanh_c"][:, t]
        c_prev = cache["c"][:, t - 1] if t > 0 else np.zeros_like(tanh_c)
        h_prev = cache["h"][:, t - 1] if t > 0 else np.zeros_like(tanh_c)
        x = cache["x_drop"][:, t]

        dh = dh_out[:, t] + dh_next
        dc = dh * o * (1.0 - tanh_c ** 2) + dc_next
        pre = {
            "i": dc * g * i * (1.0 - i),
            "f": dc * c_prev * f * (1.0 - f),
            "o": dh * tanh_c * o * (1.0 - o),
            "g": dc * i * (1.0 - g ** 2),
        }
        dc_next = dc * f
        dh_next = np.zeros_like(dh)
        for gate, da in pre.items():
            grads[f"W_{gate}"] += x.T @ da
            grads[f"U_{gate}"] += h_prev.T @ da
            grads[f"b_{gate}"] += da.sum(axis=0)
            dh_next += da @ p[f"U_{gate}"].T

    return batch_loss, grads, probs


def train(
    windows: Sequence[tuple[np.ndarray, np.ndarray]],
    config: TrainConfig,
    class_weights: Optional[np.ndarray] = None,
    n_classes: int = N_CATEGORIES,
) -> RecurrentModel:
    """
    Fit a model to (inputs (T, D), targets (T,)) windows.

    One generator seeded from ``config.rng_seed`` drives initialization,
    epoch shuffling and dropout masks, in that order.
    """
    if not windows:
        raise FeatureError("No training windows")
    shapes = {np.asarray(inputs).shape for inputs, _ in windows}
    if len(shapes) != 1:
        raise DimensionMismatchError(len(windows[0][0]), -1, f"window shapes {sorted(shapes)}")
    X = np.stack([np.asarray(inputs, dtype=np.float64) for inputs, _ in windows])
    Y = np.stack([np.asarray(targets, dtype=np.int64) for _, targets in windows])
    if Y.shape != X.shape[:2]:
        raise DimensionMismatchError(X.shape[1], Y.shape[1], "window targets")

    rng = np.random.default_rng(config.rng_seed)
    model = RecurrentModel.initialize(X.shape[2], config.hidden_units, rng, config.dropout_rate, n_classes)
    velocity = {name: np.zeros_like(value) for name, value in model.params.items()}

    logger.info(
        f"Training recurrent model on {X.shape[0]} windows of T={X.shape[1]} "
        f"(hidden={config.hidden_units}, lr={config.learning_rate}, momentum={config.momentum}, "
        f"epochs={config.epochs}, batch={config.batch_windows})"
    )

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(X.shape[0])
        total_loss = 0.0
        correct = 0
        for start in range(0, X.shape[0], config.batch_windows):
            batch = order[start:start + config.batch_windows]
            batch_loss, grads, probs = loss_and_gradients(
                model, X[batch], Y[batch], class_weights, rng, train=True
            )
            for name, value in model.params.items():
                velocity[name] = config.momentum * velocity[name] - config.learning_rate * (
                    grads[name] + config.weight_decay * value
                )
                model.params[name] = value + velocity[name]
            total_loss += batch_loss * batch.shape[0]
            correct += int((probs.argmax(axis=-1) == Y[batch]).sum())

        record = EpochRecord(epoch, total_loss / X.shape[0], correct / Y.size)
        model.history.append(record)
        logger.info(f"epoch {record.epoch}: mean_loss={record.mean_loss:.6f} train_acc={record.train_acc:.4f}")

    return model


def gradient_check(
    model: RecurrentModel,
    window: np.ndarray,
    targets: Sequence[int],
    epsilon: float = 1e-5,
    weights: Optional[np.ndarray] = None,
) -> float:
    """Max relative error between BPTT gradients and central differences, dropout off"""
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must lie in [1e-7, 1e-3], got {epsilon}")
    X = np.asarray(window, dtype=np.float64)[None]
    Y = np.asarray(targets, dtype=np.int64)[None]
    _, analytic, _ = loss_and_gradients(model, X, Y, weights, train=False)

    probe = model.copy()
    worst = 0.0
    for name in PARAM_ORDER:
        values = probe.params[name]
        flat = values.reshape(-1)
        numeric = np.zeros_like(flat)
        for k in range(flat.shape[0]):
            original = flat[k]
            flat[k] = original + epsilon
            plus, _, _ = loss_and_gradients(probe, X, Y, weights, train=False)
            flat[k] = original - epsilon
            minus, _, _ = loss_and_gradients(probe, X, Y, weights, train=False)
            flat[k] = original
            numeric[k] = (plus - minus) / (2.0 * epsilon)
        ga = analytic[name].reshape(-1)
        relative = np.abs(ga - numeric) / np.maximum(1e-8, np.abs(ga) + np.abs(numeric))
        worst = max(worst, float(relative.max()))
    return worst


def write_training_log(history: Sequence[EpochRecord], path: Union[str, Path]) -> None:
    lines = ["epoch\tmean_loss\ttrain_acc"]
    lines += [f"{r.epoch}\t{r.mean_loss!r}\t{r.train_acc!r}" for r in history]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
