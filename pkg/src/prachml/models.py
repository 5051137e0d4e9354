"""Multinomial logistic regression and a ReLU/softmax feedforward network.

Both families are trained from scratch with mini-batch gradient descent with
momentum on the multinomial cross-entropy, and share one serialization
format (see :func:`serialize`).
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DataError, InferenceError, ModelLoadError

MODEL_MAGIC = b"PRACHMDL"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 1e-2
    momentum: float = 0.9
    validation_fraction: float = 0.1
    patience: int = 10
    seed: int = 0
    hidden: tuple = (64, 64)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ConfigError("epochs, batch_size and patience must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must be in [0, 1)")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must be in (0, 1)")
        if any(h < 1 for h in self.hidden):
            raise ConfigError(f"hidden layer sizes must be positive, got {self.hidden}")

    @classmethod
    def from_dict(cls, d: dict | None) -> "TrainConfig":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Normalizer":
        x = np.asarray(x, dtype=float)
        std = x.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(x.mean(axis=0), std)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.atleast_2d(z)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _xent_and_dlogits(z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    logp = _log_softmax(z)
    n = z.shape[0]
    loss = -logp[np.arange(n), y].mean()
    d = np.exp(logp)
    d[np.arange(n), y] -= 1.0
    return float(loss), d / n


class LogisticModel:
    """Pivot-class multinomial logit: class 0 has logit 0, classes 1..K-1 are linear."""

    kind = "logistic"

    def __init__(self, weights: np.ndarray, biases: np.ndarray):
        self.weights = np.asarray(weights, dtype=float)
        self.biases = np.asarray(biases, dtype=float)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ConfigError("logistic weights must be (K-1, D) with K-1 biases")

    @classmethod
    def zeros(cls, n_features: int, n_classes: int) -> "LogisticModel":
        if n_classes < 2:
            raise ConfigError("need at least two classes")
        return cls(np.zeros((n_classes - 1, n_features)), np.zeros(n_classes - 1))

    @classmethod
    def random(cls, n_features: int, n_classes: int, rng: np.random.Generator, scale: float = 1.0):
        m = cls.zeros(n_features, n_classes)
        m.weights = rng.normal(0, scale, m.weights.shape)
        m.biases = rng.normal(0, scale, m.biases.shape)
        return m

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0] + 1

    @property
    def layer_sizes(self) -> list[int]:
        return [self.n_features, self.n_classes]

    @property
    def params(self) -> list[np.ndarray]:
        return [self.weights, self.biases]

    def logits(self, x: np.ndarray) -> np.ndarray:
        z = x @ self.weights.T + self.biases
        return np.hstack([np.zeros((x.shape[0], 1)), z])

    def loss_and_grad(self, x: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
        loss, d = _xent_and_dlogits(self.logits(x), y)
        d = d[:, 1:]
        return loss, [d.T @ x, d.sum(axis=0)]


class NeuralModel:
    """Fully connected network: ReLU on every hidden layer, softmax output."""

    kind = "neural"

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ConfigError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ConfigError(f"layer {i}: weight must be (in, out) with out biases")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ConfigError(f"layer {i}: input size mismatch")

    @classmethod
    def init(cls, layer_sizes, rng: np.random.Generator) -> "NeuralModel":
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ConfigError(f"invalid layer sizes {sizes}")
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-lim, lim, (fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def logits(self, x: np.ndarray) -> np.ndarray:
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w + b, 0.0)
        return a @ self.weights[-1] + self.biases[-1]

    def loss_and_grad(self, x: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
        acts = [x]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            acts.append(np.maximum(acts[-1] @ w + b, 0.0))
        z = acts[-1] @ self.weights[-1] + self.biases[-1]
        loss, d = _xent_and_dlogits(z, y)
        grads = []
        for i in range(len(self.weights) - 1, -1, -1):
            grads.append(d.sum(axis=0))
            grads.append(acts[i].T @ d)
            if i:
                d = (d @ self.weights[i].T) * (acts[i] > 0)
        return loss, grads[::-1]


def predict_proba(model, norm: Normalizer | None, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.n_features:
        raise InferenceError(f"model expects {model.n_features} features, got {x.shape[1]}")
    if norm is not None:
        x = norm(x)
    p = softmax(model.logits(x))
    return p[0] if single else p


def predict(model, norm: Normalizer | None, features: np.ndarray):
    """Return ``(labels, probabilities)``; ties go to the smaller class index."""
    p = predict_proba(model, norm, features)
    return np.argmax(p, axis=-1), p


def _check_training_data(x, y, n_classes):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError("training features must be a nonempty (n, d) array")
    if y.shape != (x.shape[0],):
        raise DataError("labels must be one per training row")
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite training features")
    if y.min() < 0 or y.max() >= n_classes:
        raise DataError(f"labels must be in [0, {n_classes})")
    return x, y.astype(np.int64)


def _validation_split(n: int, fraction: float, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_val = int(round(fraction * n))
    if n_val < 1 or n_val >= n:
        return np.sort(perm), None
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    initial_loss: float = float("nan")


def train_model(model, x: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> TrainHistory:
    """Mini-batch momentum descent in place; restores the best-validation parameters."""
    rng = np.random.default_rng(cfg.seed)
    tr, va = _validation_split(x.shape[0], cfg.validation_fraction, rng)
    xt, yt = x[tr], y[tr]
    xv, yv = (x[va], y[va]) if va is not None else (xt, yt)
    params = model.params
    vel = [np.zeros_like(p) for p in params]
    hist = TrainHistory()
    hist.initial_loss = model.loss_and_grad(xt, yt)[0]
    best = model.loss_and_grad(xv, yv)[0]
    best_params = [p.copy() for p in params]
    stale = 0
    n = xt.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, grads = model.loss_and_grad(xt[idx], yt[idx])
            for p, v, g in zip(params, vel, grads):
                v *= cfg.momentum
                v -= cfg.learning_rate * g
                p += v
        hist.train_loss.append(model.loss_and_grad(xt, yt)[0])
        val = model.loss_and_grad(xv, yv)[0]
        hist.val_loss.append(val)
        if not np.isfinite(val):
            break
        if val < best:
            best, stale, hist.best_epoch = val, 0, epoch
            best_params = [p.copy() for p in params]
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    for p, b in zip(params, best_params):
        p[...] = b
    return hist


def fit_logistic(x, y, n_classes: int, cfg: TrainConfig | None = None):
    """Train a pivot-class logistic model on standardized features.

    Returns ``(model, normalizer, history)``.
    """
    cfg = cfg or TrainConfig()
    x, y = _check_training_data(x, y, n_classes)
    norm = Normalizer.fit(x)
    model = LogisticModel.zeros(x.shape[1], n_classes)
    hist = train_model(model, norm(x), y, cfg)
    return model, norm, hist


def fit_neural(x, y, n_classes: int, cfg: TrainConfig | None = None):
    cfg = cfg or TrainConfig()
    if not cfg.hidden:
        raise ConfigError("a neural model needs at least one hidden layer")
    x, y = _check_training_data(x, y, n_classes)
    norm = Normalizer.fit(x)
    init_rng = np.random.default_rng([cfg.seed, 1])
    model = NeuralModel.init([x.shape[1], *cfg.hidden, n_classes], init_rng)
    hist = train_model(model, norm(x), y, cfg)
    return model, norm, hist


# --- serialization -----------------------------------------------------------
#
# layout: MODEL_MAGIC | u16 version | u32 header length | JSON header | f64 LE params
# The header lists every parameter array shape in order so the payload can be
# split without knowing the model class.


def _model_arrays(model):
    from .threshold import ThresholdDetector

    if isinstance(model, ThresholdDetector):
        return "threshold", 2, [2, 2], [np.array([model.alpha, model.target_far])]
    if isinstance(model, (LogisticModel, NeuralModel)):
        return model.kind, model.n_classes, model.layer_sizes, model.params
    raise TypeError(f"cannot serialize {type(model).__name__}")


def serialize(model, normalizer: Normalizer | None = None, metadata: dict | None = None) -> bytes:
    kind, n_classes, sizes, arrays = _model_arrays(model)
    if normalizer is not None:
        arrays = [normalizer.mean, normalizer.std] + list(arrays)
    header = {
        "kind": kind,
        "n_classes": int(n_classes),
        "layer_sizes": [int(s) for s in sizes],
        "normalizer": normalizer is not None,
        "shapes": [list(np.shape(a)) for a in arrays],
        "metadata": metadata or {},
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    return MODEL_MAGIC + struct.pack("<HI", MODEL_VERSION, len(hbytes)) + hbytes + payload


_KINDS = {"logistic": LogisticModel, "neural": NeuralModel}


def deserialize(data: bytes, expect: type | None = None):
    """Decode bytes from :func:`serialize` into ``(model, normalizer, metadata)``.

    With `expect` set to a model class, a file of another kind raises TypeError.
    """
    from .threshold import ThresholdDetector

    fixed = len(MODEL_MAGIC) + 6
    if len(data) < fixed or data[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise ModelLoadError("not a model file (bad magic)")
    version, hlen = struct.unpack("<HI", data[len(MODEL_MAGIC) : fixed])
    if version != MODEL_VERSION:
        raise ModelLoadError(f"unsupported model file version {version}")
    try:
        header = json.loads(data[fixed : fixed + hlen].decode())
        shapes = [tuple(s) for s in header["shapes"]]
        kind = header["kind"]
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise ModelLoadError(f"corrupt model header: {exc}") from None
    sizes = [int(np.prod(s)) if s else 1 for s in shapes]
    body = data[fixed + hlen :]
    if len(body) != 8 * sum(sizes):
        raise ModelLoadError(f"model payload is {len(body)} bytes, expected {8 * sum(sizes)}")
    flat = np.frombuffer(body, dtype="<f8").astype(float)
    arrays, off = [], 0
    for s, k in zip(shapes, sizes):
        arrays.append(flat[off : off + k].reshape(s))
        off += k
    norm = None
    if header.get("normalizer"):
        norm = Normalizer(arrays[0], arrays[1])
        arrays = arrays[2:]
    if kind == "threshold":
        model = ThresholdDetector(float(arrays[0][0]), float(arrays[0][1]))
    elif kind == "logistic":
        model = LogisticModel(arrays[0], arrays[1])
    elif kind == "neural":
        model = NeuralModel(arrays[0::2], arrays[1::2])
    else:
        raise ModelLoadError(f"unknown model kind {kind!r}")
    if expect is not None and not isinstance(model, expect):
        raise TypeError(f"file holds a {kind} model, not {expect.__name__}")
    return model, norm, header.get("metadata", {})


class Classifier:
    """A trained model bundled with its normalizer; what evaluation consumes."""

    def __init__(self, model, normalizer: Normalizer | None = None, metadata: dict | None = None):
        self.model = model
        self.normalizer = normalizer
        self.metadata = dict(metadata or {})

    @property
    def n_classes(self) -> int:
        return self.model.n_classes

    @property
    def kind(self) -> str:
        return _model_arrays(self.model)[0]

    def predict_dataset(self, ds) -> np.ndarray:
        if self.kind == "threshold":
            return self.model.predict_dataset(ds)
        return predict(self.model, self.normalizer, ds.features)[0]

    def to_bytes(self) -> bytes:
        return serialize(self.model, self.normalizer, self.metadata)

    @classmethod
    def from_bytes(cls, data: bytes, expect: type | None = None) -> "Classifier":
        return cls(*deserialize(data, expect))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path, expect: type | None = None) -> "Classifier":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), expect)
