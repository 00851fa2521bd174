"""A small fully connected ReLU network with a softmax head.

Weights are stored input-major: layer ``l`` holds a ``(n_{l-1}, n_l)``
matrix so that ``h_l = relu(h_{l-1} @ W_l + b_l)``.  The last matrix maps the
final hidden layer to the ``c`` class logits.  Backpropagation is written out
by hand and certified against central finite differences by
:func:`gradient_check`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np

from .bounds import PwlnArchitecture

INIT_STD = 0.05

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
RMSPROP_DECAY = 0.9
RMSPROP_EPS = 1e-8

MODEL_FORMAT = "pwln-interp-mlp/1"

Optimizer = Literal["sgd", "rmsprop", "adam"]
TargetMode = Literal["hard_labels", "soft_probabilities"]


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class MlpModel:
    architecture: PwlnArchitecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    rng_seed: int = 0

    def __post_init__(self):
        dims = self.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError(
                f"expected {len(dims) - 1} weight/bias pairs, got {len(self.weights)}/{len(self.biases)}"
            )
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise ValueError(
                    f"layer {i + 1}: expected W{(dims[i], dims[i + 1])} and b{(dims[i + 1],)}, "
                    f"got W{w.shape} and b{b.shape}"
                )

    @property
    def layer_dims(self) -> list[int]:
        a = self.architecture
        return [a.input_dim, *a.layer_widths, a.class_count]

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.architecture,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.rng_seed,
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params)


def _truncated_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out


def init_truncated_normal(
    arch: PwlnArchitecture, seed: int, std: float = INIT_STD, bias_init: float = 0.0
) -> MlpModel:
    """Weights ~ N(0, std) redrawn outside +-2 std; biases constant."""
    rng = np.random.default_rng(seed)
    dims = [arch.input_dim, *arch.layer_widths, arch.class_count]
    weights = [_truncated_normal(rng, (dims[i], dims[i + 1]), std) for i in range(len(dims) - 1)]
    biases = [np.full(dims[i + 1], float(bias_init)) for i in range(len(dims) - 1)]
    return MlpModel(arch, weights, biases, int(seed))


def zeros_model(arch: PwlnArchitecture, seed: int = 0) -> MlpModel:
    dims = [arch.input_dim, *arch.layer_widths, arch.class_count]
    return MlpModel(
        arch,
        [np.zeros((dims[i], dims[i + 1])) for i in range(len(dims) - 1)],
        [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)],
        seed,
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(model: MlpModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.architecture.input_dim:
        raise ValueError(
            f"input has dimension {X.shape[-1] if X.ndim else 0}, model expects {model.architecture.input_dim}"
        )
    return X


def _forward_pass(model: MlpModel, X: np.ndarray):
    """Return (hidden pre-activations, layer inputs, logits)."""
    pre, inputs = [], []
    h = X
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        inputs.append(h)
        z = h @ w + b
        if i == last:
            return pre, inputs, z
        pre.append(z)
        h = np.maximum(z, 0.0)
    raise AssertionError("unreachable")


def logits(model: MlpModel, X) -> np.ndarray:
    return _forward_pass(model, _as_batch(model, X))[2]


def predict_proba(model: MlpModel, X) -> np.ndarray:
    return softmax(logits(model, X))


def activation_patterns(model: MlpModel, X) -> np.ndarray:
    """On/off state of every hidden unit, ``pre-activation > 0``, per row."""
    pre, _, _ = _forward_pass(model, _as_batch(model, X))
    return np.concatenate([z > 0.0 for z in pre], axis=1)


class ForwardResult(NamedTuple):
    probabilities: np.ndarray
    activation_pattern: np.ndarray


def forward(model: MlpModel, x) -> ForwardResult:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("forward takes a single input vector; use predict_proba for batches")
    X = _as_batch(model, x)
    pre, _, z = _forward_pass(model, X)
    pattern = np.concatenate([p[0] > 0.0 for p in pre])
    return ForwardResult(softmax(z)[0], pattern)


def _target_matrix(targets, n: int, c: int) -> np.ndarray:
    t = np.asarray(targets)
    if t.ndim == 1:
        if t.shape[0] != n:
            raise ValueError(f"{t.shape[0]} targets for {n} inputs")
        if not np.issubdtype(t.dtype, np.integer):
            raise ValueError("hard targets must be integer class indices")
        if t.size and (t.min() < 0 or t.max() >= c):
            raise ValueError(f"class index out of range [0, {c})")
        out = np.zeros((n, c))
        out[np.arange(n), t] = 1.0
        return out
    if t.shape != (n, c):
        raise ValueError(f"soft targets must have shape {(n, c)}, got {t.shape}")
    return t.astype(np.float64)


def loss_and_grads(model: MlpModel, X, targets) -> tuple[float, list[np.ndarray]]:
    """Mean cross-entropy and its gradient, ordered like ``model.params``."""
    X = _as_batch(model, X)
    n = X.shape[0]
    T = _target_matrix(targets, n, model.architecture.class_count)
    pre, inputs, z = _forward_pass(model, X)
    zs = z - z.max(axis=1, keepdims=True)
    log_p = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
    loss = float(-(T * log_p).sum() / n)

    delta = (np.exp(log_p) - T) / n
    grads_w, grads_b = [], []
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w.append(inputs[i].T @ delta)
        grads_b.append(delta.sum(axis=0))
        if i > 0:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0.0)
    grads = []
    for gw, gb in zip(reversed(grads_w), reversed(grads_b)):
        grads.extend((gw, gb))
    return loss, grads


def cross_entropy(model: MlpModel, X, targets) -> float:
    X = _as_batch(model, X)
    T = _target_matrix(targets, X.shape[0], model.architecture.class_count)
    z = logits(model, X)
    zs = z - z.max(axis=1, keepdims=True)
    log_p = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
    return float(-(T * log_p).sum() / X.shape[0])


# --- optimizers -------------------------------------------------------------


class Sgd:
    def __init__(self, learning_rate: float):
        self.lr = learning_rate

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class RmsProp:
    def __init__(self, learning_rate: float, decay: float = RMSPROP_DECAY, eps: float = RMSPROP_EPS):
        self.lr, self.decay, self.eps = learning_rate, decay, eps
        self.sq = None

    def step(self, params, grads):
        if self.sq is None:
            self.sq = [np.zeros_like(p) for p in params]
        for p, g, s in zip(params, grads, self.sq):
            s *= self.decay
            s += (1.0 - self.decay) * g * g
            p -= self.lr * g / (np.sqrt(s) + self.eps)


class Adam:
    def __init__(
        self,
        learning_rate: float,
        beta1: float = ADAM_BETA1,
        beta2: float = ADAM_BETA2,
        eps: float = ADAM_EPS,
    ):
        self.lr, self.beta1, self.beta2, self.eps = learning_rate, beta1, beta2, eps
        self.t = 0
        self.m = self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(name: str, learning_rate: float):
    if name == "sgd":
        return Sgd(learning_rate)
    if name == "rmsprop":
        return RmsProp(learning_rate)
    if name == "adam":
        return Adam(learning_rate)
    raise ValueError(f"unknown optimizer {name!r}")


OPTIMIZER_CONSTANTS = {
    "adam": {"beta1": ADAM_BETA1, "beta2": ADAM_BETA2, "eps": ADAM_EPS},
    "rmsprop": {"decay": RMSPROP_DECAY, "eps": RMSPROP_EPS},
    "sgd": {},
}


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 30
    target_mode: str = "hard_labels"

    def __post_init__(self):
        if self.optimizer not in OPTIMIZER_CONSTANTS:
            raise ValueError(f"optimizer must be one of {sorted(OPTIMIZER_CONSTANTS)}, got {self.optimizer!r}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.target_mode not in ("hard_labels", "soft_probabilities"):
            raise ValueError(f"unknown target_mode {self.target_mode!r}")

    def to_dict(self) -> dict:
        return {
            "optimizer": self.optimizer,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "target_mode": self.target_mode,
            "optimizer_constants": OPTIMIZER_CONSTANTS[self.optimizer],
        }


def shuffle_rng(seed: int) -> np.random.Generator:
    # a dedicated stream so that batch order does not consume the init stream
    return np.random.default_rng(np.random.SeedSequence([int(seed), 0x5348_5546]))


def train(model: MlpModel, X, targets, config: TrainConfig, seed: int | None = None):
    """Minibatch training on mean cross-entropy.

    Returns ``(trained_model, loss_trace)`` with one mean training loss per
    epoch.  The input model is left untouched.
    """
    model = model.copy()
    X = _as_batch(model, X)
    n = X.shape[0]
    T = _target_matrix(targets, n, model.architecture.class_count)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = shuffle_rng(model.rng_seed if seed is None else seed)
    opt = make_optimizer(config.optimizer, config.learning_rate)
    params = model.params
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for batch, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            loss, grads = loss_and_grads(model, X[idx], T[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, batch, loss)
            opt.step(params, grads)
            if not all(np.all(np.isfinite(p)) for p in params):
                raise TrainingDivergedError(epoch, batch, math.nan)
            total += loss * len(idx)
        trace.append(total / n)
    return model, trace


def gradient_check(model: MlpModel, X, targets, h: float = 1e-5) -> float:
    """Max relative error between backprop and central differences.

    Relative error is ``|a - b| / max(|a|, |b|, 1e-8)`` over every parameter.
    """
    if not 1e-6 <= h <= 1e-3:
        raise ValueError(f"perturbation h must lie in [1e-6, 1e-3], got {h}")
    probe = model.copy()
    _, grads = loss_and_grads(probe, X, targets)
    worst = 0.0
    for p, g in zip(probe.params, grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = cross_entropy(probe, X, targets)
            flat[i] = orig - h
            down = cross_entropy(probe, X, targets)
            flat[i] = orig
            fd = (up - down) / (2.0 * h)
            err = abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-8)
            worst = max(worst, err)
    return worst


class MlpClassifier:
    """Adapter giving an :class:`MlpModel` the fit/predict_proba interface."""

    def __init__(self, model: MlpModel, config: TrainConfig | None = None, seed: int | None = None):
        self.model = model
        self.config = config or TrainConfig()
        self.seed = model.rng_seed if seed is None else seed
        self.loss_trace: list[float] = []

    fitted = True  # any parameter set defines a classifier

    @property
    def class_count(self) -> int:
        return self.model.architecture.class_count

    def initial_proba(self, X) -> np.ndarray:
        return predict_proba(self.model, X)

    def fit(self, X, targets) -> "MlpClassifier":
        self.model, trace = train(self.model, X, targets, self.config, self.seed)
        self.loss_trace.extend(trace)
        return self

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba(self.model, X)


# --- serialization ----------------------------------------------------------


def model_to_dict(model: MlpModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "architecture": model.architecture.to_dict(),
        "weight_layout": "row-major, rows = layer inputs",
        "weights": [[[float(v).hex() for v in row] for row in w] for w in model.weights],
        "biases": [[float(v).hex() for v in b] for b in model.biases],
        "seed": int(model.rng_seed),
    }


def model_from_dict(d: dict) -> MlpModel:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {d.get('format')!r}")
    arch = PwlnArchitecture.from_dict(d["architecture"])

    def _f(v):
        return float.fromhex(v) if isinstance(v, str) else float(v)

    weights = [np.array([[_f(v) for v in row] for row in w], dtype=np.float64) for w in d["weights"]]
    dims = [arch.input_dim, *arch.layer_widths, arch.class_count]
    weights = [w.reshape(dims[i], dims[i + 1]) for i, w in enumerate(weights)]
    biases = [np.array([_f(v) for v in b], dtype=np.float64) for b in d["biases"]]
    return MlpModel(arch, weights, biases, int(d.get("seed", 0)))


def save_model(model: MlpModel, path) -> None:
    from .io_utils import atomic_write_text

    atomic_write_text(path, json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path) -> MlpModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
