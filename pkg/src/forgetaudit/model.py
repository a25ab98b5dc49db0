"""Small from-scratch classifiers trained with cross-entropy and Adam.

Two designs are supported: softmax regression (``hidden_dim == 0``) and a
single hidden ReLU layer (``hidden_dim > 0``). The weights live in one flat
float64 vector with layout::

    hidden_dim == 0:  W (d x M, row-major), b (M)
    hidden_dim  > 0:  W1 (d x H), b1 (H), W2 (H x M), b2 (M)

Everything is seeded from ``ClassifierConfig.seed``: weight initialisation
and the per-epoch minibatch shuffles. Training twice with the same config and
data reproduces the weights bit for bit.
"""

import hashlib
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._backend import kernels
from .errors import ConfigError, InputError, ParseError, TrainingError

logger = logging.getLogger(__name__)

MAGIC = b"FGTM"
FORMAT_VERSION = 1
# magic, version u32, input_dim u64, num_classes u64, hidden_dim u64,
# seed u64, weight count u64
_HEADER = struct.Struct("<4sIQQQQQ")

_U64_MAX = 2**64 - 1


@dataclass(frozen=True)
class ClassifierConfig:
    input_dim: int
    num_classes: int
    hidden_dim: int = 0
    seed: int = 0

    def __post_init__(self):
        for name in ("input_dim", "num_classes", "hidden_dim", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.input_dim < 1:
            raise ConfigError("input_dim must be positive")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be at least 2")
        if self.hidden_dim < 0:
            raise ConfigError("hidden_dim must be non-negative")
        if not 0 <= self.seed <= _U64_MAX:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")

    @property
    def num_weights(self):
        d, m, h = self.input_dim, self.num_classes, self.hidden_dim
        if h == 0:
            return d * m + m
        return d * h + h + h * m + m

    def with_seed(self, seed):
        return ClassifierConfig(self.input_dim, self.num_classes, self.hidden_dim, seed)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not isinstance(self.epochs, (int, np.integer)) or self.epochs < 1:
            raise ConfigError("epochs must be an integer >= 1")
        if not isinstance(self.batch_size, (int, np.integer)) or self.batch_size < 1:
            raise ConfigError("batch_size must be an integer >= 1")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ConfigError("learning_rate must be positive")
        if not 0 < self.beta1 < 1 or not 0 < self.beta2 < 1:
            raise ConfigError("beta1 and beta2 must lie strictly between 0 and 1")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass(eq=False)
class Classifier:
    config: ClassifierConfig
    weights: np.ndarray
    train_accuracy: float | None = None
    epoch_losses: list = field(default_factory=list)

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.shape != (self.config.num_weights,):
            raise InputError(
                f"expected {self.config.num_weights} weights, got shape {w.shape}"
            )
        if not np.all(np.isfinite(w)):
            raise InputError("weights must be finite")
        self.weights = w

    @property
    def id(self):
        digest = hashlib.sha256(self.weights.tobytes()).hexdigest()[:12]
        c = self.config
        return f"clf(d={c.input_dim},M={c.num_classes},h={c.hidden_dim},seed={c.seed})#{digest}"

    def params(self):
        return unpack(self.config, self.weights)

    def predict_proba(self, x):
        return forward(self, x)


@dataclass(frozen=True, eq=False)
class ConfidenceMatrix:
    """Post-softmax outputs ``t`` (N x M) for a dataset with labels ``y``."""

    t: np.ndarray
    y: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.ascontiguousarray(self.t, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.int64)
        if t.ndim != 2 or y.ndim != 1 or t.shape[0] != y.shape[0] or t.shape[0] < 1:
            raise InputError("confidence matrix must be N x M with N labels, N >= 1")
        if y.min() < 0 or y.max() >= t.shape[1]:
            raise InputError("labels out of range for confidence matrix")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)

    @property
    def num_classes(self):
        return self.t.shape[1]

    def __len__(self):
        return self.t.shape[0]


def unpack(config, weights):
    """Views into the flat weight vector, in layout order."""
    d, m, h = config.input_dim, config.num_classes, config.hidden_dim
    if h == 0:
        return [weights[: d * m].reshape(d, m), weights[d * m :]]
    o = 0
    w1 = weights[o : o + d * h].reshape(d, h)
    o += d * h
    b1 = weights[o : o + h]
    o += h
    w2 = weights[o : o + h * m].reshape(h, m)
    o += h * m
    b2 = weights[o : o + m]
    return [w1, b1, w2, b2]


def init(config):
    """Glorot-uniform weights, zero biases, drawn from ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    weights = np.zeros(config.num_weights)
    d, m, h = config.input_dim, config.num_classes, config.hidden_dim
    parts = unpack(config, weights)
    layers = [(parts[0], d, m)] if h == 0 else [(parts[0], d, h), (parts[2], h, m)]
    for w, fan_in, fan_out in layers:
        a = math.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.uniform(-a, a, size=w.shape)
    return Classifier(config, weights)


def _check_x(config, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != config.input_dim:
        raise InputError(
            f"expected feature dimension {config.input_dim}, got shape {x.shape}"
        )
    return x


def _log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _logits(config, weights, x):
    p = unpack(config, weights)
    if config.hidden_dim == 0:
        return x @ p[0] + p[1], None
    pre = x @ p[0] + p[1]
    hid = np.maximum(pre, 0.0)
    return hid @ p[2] + p[3], (pre, hid)


def forward(model, x):
    """Class probabilities for a batch, one row per sample."""
    x = _check_x(model.config, x)
    logits, _ = _logits(model.config, model.weights, x)
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(model, x, y):
    """Mean cross-entropy over the batch and its gradient w.r.t. the flat weights."""
    config = model.config
    x = _check_x(config, x)
    y = np.asarray(y, dtype=np.int64)
    n = x.shape[0]
    if n == 0 or y.shape != (n,):
        raise InputError("batch must be non-empty with one label per row")
    if y.min() < 0 or y.max() >= config.num_classes:
        raise InputError("labels out of range")
    logits, cache = _logits(config, model.weights, x)
    logp = _log_softmax(logits)
    rows = np.arange(n)
    loss = -logp[rows, y].mean()

    dlogits = np.exp(logp)
    dlogits[rows, y] -= 1.0
    dlogits /= n

    grad = np.empty_like(model.weights)
    g = unpack(config, grad)
    if config.hidden_dim == 0:
        g[0][...] = x.T @ dlogits
        g[1][...] = dlogits.sum(axis=0)
    else:
        pre, hid = cache
        w2 = unpack(config, model.weights)[2]
        g[2][...] = hid.T @ dlogits
        g[3][...] = dlogits.sum(axis=0)
        dhid = (dlogits @ w2.T) * (pre > 0.0)
        g[0][...] = x.T @ dhid
        g[1][...] = dhid.sum(axis=0)
    return float(loss), grad


def adam_step(theta, grad, moment1, moment2, step_index, cfg):
    """One Adam update with bias correction, applied in place.

    Returns the updated ``(theta, moment1, moment2)`` (the same arrays).
    """
    if step_index < 1:
        raise InputError("step_index starts at 1")
    if not (theta.shape == grad.shape == moment1.shape == moment2.shape):
        raise InputError("Adam vectors must have equal length")
    if not np.all(np.isfinite(grad)):
        raise TrainingError("non-finite gradient", step=step_index)
    bc1 = 1.0 - cfg.beta1**step_index
    bc2 = 1.0 - cfg.beta2**step_index
    kernels.adam_update(
        theta, grad, moment1, moment2,
        cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon, bc1, bc2,
    )
    return theta, moment1, moment2


def train(config, data, tcfg=None):
    """Train a fresh model of design ``config`` on ``data`` for ``tcfg.epochs``."""
    tcfg = tcfg or TrainConfig()
    x, y = data.features, data.labels
    if x.shape[1] != config.input_dim:
        raise InputError(
            f"dataset {data.id} has feature dimension {x.shape[1]}, "
            f"model expects {config.input_dim}"
        )
    if y.max() >= config.num_classes:
        raise InputError(f"dataset {data.id} has labels >= {config.num_classes}")

    model = init(config)
    theta = model.weights
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    # Shuffle stream is separate from the init stream but derived from the same seed.
    rng = np.random.default_rng([config.seed, 1])
    n = x.shape[0]
    step = 0
    for epoch in range(1, tcfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, tcfg.batch_size):
            idx = order[start : start + tcfg.batch_size]
            loss, grad = loss_and_grad(model, x[idx], y[idx])
            step += 1
            if not math.isfinite(loss):
                raise TrainingError("loss diverged", epoch=epoch, step=step)
            try:
                adam_step(theta, grad, m1, m2, step, tcfg)
            except TrainingError as exc:
                raise TrainingError("non-finite gradient", epoch=epoch, step=step) from exc
            total += loss * idx.shape[0]
        model.epoch_losses.append(total / n)
        logger.debug("epoch %d loss %.6f", epoch, total / n)
    if not np.all(np.isfinite(theta)):
        raise TrainingError("weights became non-finite", epoch=tcfg.epochs, step=step)
    model.train_accuracy = accuracy(model, data)
    return model


def accuracy(model, data):
    pred = forward(model, data.features).argmax(axis=1)
    return float(np.mean(pred == data.labels))


def evaluate(model, data):
    """Confidence matrix of ``model`` on ``data`` (row order preserved)."""
    t = forward(model, data.features)
    return ConfidenceMatrix(t, data.labels, {"model": model.id, "dataset": data.id})


def save(model, path):
    """Write the binary model container (little-endian)."""
    c = model.config
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, c.input_dim, c.num_classes, c.hidden_dim, c.seed,
        model.weights.shape[0],
    )
    Path(path).write_bytes(header + model.weights.astype("<f8").tobytes())


def load(path):
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise ParseError("truncated model header", path=path, offset=len(blob))
    magic, version, d, m, h, seed, count = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {MAGIC!r}", path=path, offset=0)
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format version {version}", path=path, offset=4)
    try:
        config = ClassifierConfig(d, m, h, seed)
    except ConfigError as exc:
        raise ParseError(f"invalid config in header: {exc}", path=path, offset=8) from exc
    if count != config.num_weights:
        raise ParseError(
            f"weight count {count} does not match config ({config.num_weights})",
            path=path, offset=40,
        )
    expected = _HEADER.size + 8 * count
    if len(blob) != expected:
        raise ParseError(
            f"expected {expected} bytes, file has {len(blob)}", path=path,
            offset=min(len(blob), expected),
        )
    weights = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    try:
        return Classifier(config, weights)
    except InputError as exc:
        raise ParseError(str(exc), path=path, offset=_HEADER.size) from exc
