"""
Single-hidden-layer perceptron that regresses pilot values from data subcarriers.

The network is ``out = W2 relu(W1 x + b1) + b2`` with a linear output layer,
trained on mean squared error against the searched pilot values ``+/-sqrt(E)``.
At inference the raw outputs are quantized to their sign, so every emitted
pilot is one the search itself could have produced.

Everything is plain numpy in float64; gradients are written out by hand.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import BIN_MAGIC, PaprDataset
from .errors import DatasetFormatError, DomainError
from .mcsa import PilotConfig

MODEL_FORMAT = "papr-lab-mlp"
MODEL_VERSION = 1


class Activation(str, enum.Enum):
    RELU = "RELU"


class Optimizer(str, enum.Enum):
    SGD_MOMENTUM = "SGD_MOMENTUM"
    ADAM = "ADAM"


@dataclass
class MlpModel:
    w1: np.ndarray  # (H, D)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (P, H)
    b2: np.ndarray  # (P,)
    activation: Activation = Activation.RELU

    def __post_init__(self):
        self.activation = Activation(self.activation)
        h, d = np.shape(self.w1)
        if np.shape(self.b1) != (h,) or np.shape(self.w2)[1:] != (h,):
            raise DomainError("hidden-layer dimensions are inconsistent")
        if np.shape(self.b2) != (np.shape(self.w2)[0],):
            raise DomainError("output-layer dimensions are inconsistent")

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def inputs(self) -> int:
        return self.w1.shape[1]

    @property
    def outputs(self) -> int:
        return self.w2.shape[0]

    def params(self) -> tuple[np.ndarray, ...]:
        return self.w1, self.b1, self.w2, self.b2

    def copy(self) -> "MlpModel":
        return MlpModel(*(p.copy() for p in self.params()), activation=self.activation)

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params())

    def __eq__(self, other):
        if not isinstance(other, MlpModel):
            return NotImplemented
        return self.activation == other.activation and all(
            np.array_equal(a, b) for a, b in zip(self.params(), other.params())
        )


def init_model(inputs: int, outputs: int, hidden: int = 500, seed: int = 0) -> MlpModel:
    """Uniform ``+/- 1/sqrt(fan_in)`` weights and zero biases."""
    rng = np.random.Generator(np.random.PCG64(seed))
    lim1 = 1.0 / np.sqrt(inputs)
    lim2 = 1.0 / np.sqrt(hidden)
    return MlpModel(
        w1=rng.uniform(-lim1, lim1, (hidden, inputs)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-lim2, lim2, (outputs, hidden)),
        b2=np.zeros(outputs),
    )


def _check_inputs(model: MlpModel, x: np.ndarray) -> None:
    if x.shape[-1] != model.inputs:
        raise DomainError(f"expected {model.inputs} input features, got {x.shape[-1]}")


def forward(model: MlpModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    _check_inputs(model, x)
    hidden = np.maximum(x @ model.w1.T + model.b1, 0.0)
    return hidden @ model.w2.T + model.b2


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DomainError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise DomainError("loss of an empty batch is undefined")
    diff = pred - target
    return float(np.mean(diff * diff))


def backward(model: MlpModel, features, targets) -> MlpModel:
    """Gradient of ``mse_loss(forward(model, X), Y)`` for every parameter.

    Returned as an :class:`MlpModel` whose arrays hold the partial derivatives.
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    _check_inputs(model, x)
    if x.shape[0] == 0:
        raise DomainError("batch must hold at least one row")
    if y.shape != (x.shape[0], model.outputs):
        raise DomainError(f"targets must have shape {(x.shape[0], model.outputs)}, got {y.shape}")
    pre = x @ model.w1.T + model.b1
    act = np.maximum(pre, 0.0)
    out = act @ model.w2.T + model.b2
    d_out = (2.0 / y.size) * (out - y)
    d_pre = (d_out @ model.w2) * (pre > 0)
    return MlpModel(
        w1=d_pre.T @ x,
        b1=d_pre.sum(axis=0),
        w2=d_out.T @ act,
        b2=d_out.sum(axis=0),
        activation=model.activation,
    )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 64
    learning_rate: float = 1e-3
    validation_fraction: float = 0.1
    seed: int = 0
    optimizer: Optimizer = Optimizer.ADAM
    hidden: int = 500
    momentum: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_final_fraction: float = 0.01
    weight_decay: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        if self.epochs < 1:
            raise DomainError("epochs must be >= 1")
        if self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise DomainError("learning_rate must be positive")
        if not 0.0 < self.validation_fraction < 1.0:
            raise DomainError("validation_fraction must lie in (0, 1)")
        if not 0.0 < self.lr_final_fraction <= 1.0:
            raise DomainError("lr_final_fraction must lie in (0, 1]")
        if self.weight_decay < 0:
            raise DomainError("weight_decay must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["optimizer"] = self.optimizer.value
        return d


@dataclass
class TrainTrace:
    train_loss: np.ndarray
    val_loss: np.ndarray
    config: dict = field(default_factory=dict)


def learning_rate_at(config: TrainConfig, epoch: int) -> float:
    """Step size for ``epoch``: geometric decay from ``learning_rate`` down to
    ``learning_rate * lr_final_fraction`` at the last epoch."""
    if config.epochs == 1 or config.lr_final_fraction == 1.0:
        return config.learning_rate
    return config.learning_rate * config.lr_final_fraction ** (epoch / (config.epochs - 1))


class _Adam:
    def __init__(self, model: MlpModel, cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in model.params()]
        self.v = [np.zeros_like(p) for p in model.params()]
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        b1, b2 = self.cfg.momentum, self.cfg.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.cfg.eps)


class _Momentum:
    def __init__(self, model: MlpModel, cfg: TrainConfig):
        self.cfg = cfg
        self.vel = [np.zeros_like(p) for p in model.params()]

    def step(self, params, grads, lr):
        for p, g, vel in zip(params, grads, self.vel):
            vel *= self.cfg.momentum
            vel -= lr * g
            p += vel


def split_train_validation(n_train: int, validation_fraction: float) -> int:
    """Rows ``[0, cut)`` fit the model, ``[cut, n_train)`` validate it."""
    n_val = max(1, int(round(validation_fraction * n_train)))
    if n_val >= n_train:
        raise DomainError(f"{n_train} training rows leave nothing to fit after validation")
    return n_train - n_val


def train(dataset: PaprDataset, config: TrainConfig = TrainConfig(), *, progress=None):
    """Fit a fresh model on the training partition of ``dataset``.

    Only rows below ``dataset.split_index`` are read. The last
    ``validation_fraction`` of them are held out for the validation curve.
    ``progress`` is called as ``progress(epoch, train_loss, val_loss)``.
    """
    x_all = dataset.train_features
    y_all = dataset.train_labels
    if x_all.shape[0] == 0:
        raise DomainError("dataset has an empty training partition")
    if x_all.shape[0] == 1:
        x_fit, y_fit = x_all, y_all
        x_val, y_val = x_all, y_all
    else:
        cut = split_train_validation(x_all.shape[0], config.validation_fraction)
        x_fit, y_fit = x_all[:cut], y_all[:cut]
        x_val, y_val = x_all[cut:], y_all[cut:]

    model = init_model(x_fit.shape[1], y_fit.shape[1], config.hidden, config.seed)
    opt = _Adam(model, config) if config.optimizer is Optimizer.ADAM else _Momentum(model, config)
    shuffler = np.random.Generator(np.random.PCG64(config.seed ^ 0x5EED))
    n = x_fit.shape[0]
    train_loss = np.empty(config.epochs)
    val_loss = np.empty(config.epochs)
    params = list(model.params())
    for epoch in range(config.epochs):
        lr = learning_rate_at(config, epoch)
        order = shuffler.permutation(n)
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            grad = backward(model, x_fit[idx], y_fit[idx])
            opt.step(params, list(grad.params()), lr)
            if config.weight_decay:
                # decoupled decay on the weight matrices only
                model.w1 *= 1.0 - lr * config.weight_decay
                model.w2 *= 1.0 - lr * config.weight_decay
        train_loss[epoch] = mse_loss(forward(model, x_fit), y_fit)
        val_loss[epoch] = mse_loss(forward(model, x_val), y_val)
        if progress is not None:
            progress(epoch, train_loss[epoch], val_loss[epoch])
    return model, TrainTrace(train_loss, val_loss, config.to_dict())


def predict_signs(model: MlpModel, features) -> np.ndarray:
    """Sign of each raw output, zero mapped to +1."""
    raw = forward(model, features)
    return np.where(raw < 0, -1, 1).astype(np.int8)


def predict_pilots(model: MlpModel, features, magnitude: float) -> PilotConfig:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise DomainError("predict_pilots takes one feature row; use predict_signs for batches")
    return PilotConfig(predict_signs(model, x), magnitude)


# ---------------------------------------------------------------------------
# persistence: one JSON header line, then the packed float64 block


def save_model(path, model: MlpModel, **header) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "H": model.hidden,
        "D": model.inputs,
        "P": model.outputs,
        "activation": model.activation.value,
        **header,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(head, sort_keys=True).encode() + b"\n")
        fh.write(BIN_MAGIC)
        for p in model.params():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return path


def load_model(path) -> tuple[MlpModel, dict]:
    raw = Path(path).read_bytes()
    line, sep, body = raw.partition(b"\n")
    if not sep:
        raise DatasetFormatError("model file has no header line", field="header")
    try:
        head = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"model header is not JSON ({exc.msg})", field="header") from None
    if head.get("format") != MODEL_FORMAT or head.get("version") != MODEL_VERSION:
        raise DatasetFormatError("not a papr-lab model file", field="format")
    if not body.startswith(BIN_MAGIC):
        raise DatasetFormatError("bad magic before parameter block", field="magic")
    body = body[len(BIN_MAGIC) :]
    try:
        h, d, p = int(head["H"]), int(head["D"]), int(head["P"])
    except (KeyError, TypeError, ValueError):
        raise DatasetFormatError("header lacks integer H/D/P", field="header") from None
    shapes = {"w1": (h, d), "b1": (h,), "w2": (p, h), "b2": (p,)}
    total = sum(int(np.prod(s)) for s in shapes.values())
    if len(body) != 8 * total:
        raise DatasetFormatError(
            f"parameter block holds {len(body) // 8} floats, header dims need {total}",
            field="H/D/P",
        )
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    arrays, at = {}, 0
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        arrays[name] = values[at : at + size].reshape(shape)
        at += size
    model = MlpModel(**arrays, activation=head.get("activation", "RELU"))
    if not model.is_finite():
        raise DatasetFormatError("model parameters are not finite", field="parameters")
    return model, head

