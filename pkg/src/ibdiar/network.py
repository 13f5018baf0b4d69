"""Feed-forward speaker-discriminative network trained on first-pass labels.

Architecture: input -> tanh hidden layer -> linear hidden layer (the latent
"bottleneck" read out as features) -> softmax over per-recording labels.
Weights follow the ``x @ W + b`` convention, so ``W1`` has shape
``(input_dim, hidden1)``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from . import container
from .exceptions import CheckpointError, DiarizationError, ParameterError

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


class TrainingError(DiarizationError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int = 19
    hidden1: int = 30
    hidden2: int = 16
    output_dim: int = 2

    def __post_init__(self):
        if min(self.input_dim, self.hidden1, self.hidden2, self.output_dim) < 1:
            raise ParameterError("network dimensions must be positive")

    def layer_shapes(self):
        return [(self.input_dim, self.hidden1), (self.hidden1, self.hidden2),
                (self.hidden2, self.output_dim)]


@dataclass(frozen=True)
class ModelCheckpoint:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in PARAM_NAMES:
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise CheckpointError(f"non-finite values in {name}")
            object.__setattr__(self, name, arr)
        chain = [(self.W1, self.b1), (self.W2, self.b2), (self.W3, self.b3)]
        for k, (w, b) in enumerate(chain):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise CheckpointError(f"layer {k + 1} weight/bias shapes disagree")
            if k and chain[k - 1][0].shape[1] != w.shape[0]:
                raise CheckpointError(f"layer {k + 1} input does not match layer {k} output")

    @property
    def spec(self) -> NetworkSpec:
        return NetworkSpec(self.W1.shape[0], self.W1.shape[1], self.W2.shape[1], self.W3.shape[1])

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in PARAM_NAMES}

    @property
    def id(self) -> str:
        return container.digest(self.arrays())

    def with_params(self, params: dict, **meta) -> "ModelCheckpoint":
        return replace(self, **params, meta={**self.meta, **meta})

    def to_bytes(self) -> bytes:
        return container.dumps(b"ANN ", self.arrays(), self.meta)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ModelCheckpoint":
        arrays, meta = container.loads(blob, b"ANN ")
        missing = set(PARAM_NAMES) - set(arrays)
        if missing:
            raise CheckpointError(f"checkpoint lacks {sorted(missing)}")
        return cls(**{n: arrays[n] for n in PARAM_NAMES}, meta=meta)

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ModelCheckpoint":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass(frozen=True)
class TrainBatchSet:
    inputs: np.ndarray
    targets: np.ndarray
    n_classes: int

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.targets, dtype=np.int64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise ParameterError("inputs must be T x D with one target per row")
        if y.size == 0:
            raise ParameterError("empty training set")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise ParameterError("target label out of range")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)


@dataclass(frozen=True)
class SgdConfig:
    """Plain mini-batch SGD with early stopping on the training cross-entropy.

    Training stops once the epoch loss reaches ``target_loss`` (if set),
    when it has not improved by at least ``min_delta`` for ``patience``
    consecutive epochs, or at ``max_epochs``.
    """

    learning_rate: float = 0.01
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 5
    min_delta: float = 1e-4
    target_loss: float | None = None
    seed: int = 0


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def xavier_init(spec: NetworkSpec, seed: int = 0) -> ModelCheckpoint:
    rng = np.random.default_rng(seed)
    params = {}
    for k, (fi, fo) in enumerate(spec.layer_shapes(), 1):
        params[f"W{k}"] = xavier_uniform(rng, fi, fo)
        params[f"b{k}"] = np.zeros(fo)
    meta = {"recordings_seen": 0, "total_epochs": 0, "created_from": "xavier", "rng_seed": int(seed)}
    return ModelCheckpoint(**params, meta=meta)


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(logits - logsumexp(logits, axis=1, keepdims=True))


def forward(ckpt: ModelCheckpoint, inputs: np.ndarray):
    """Return ``(latent, logits)``; latent is the linear second hidden layer."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != ckpt.W1.shape[0]:
        raise ParameterError(f"expected inputs with {ckpt.W1.shape[0]} columns, got {x.shape}")
    h = np.tanh(x @ ckpt.W1 + ckpt.b1)
    latent = h @ ckpt.W2 + ckpt.b2
    return latent, latent @ ckpt.W3 + ckpt.b3


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> float:
    lse = logsumexp(logits, axis=1)
    return float(np.mean(lse - logits[np.arange(targets.size), targets]))


def loss_and_gradients(params: dict, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and its gradient with respect to every parameter."""
    h = np.tanh(x @ params["W1"] + params["b1"])
    z = h @ params["W2"] + params["b2"]
    logits = z @ params["W3"] + params["b3"]
    lse = logsumexp(logits, axis=1, keepdims=True)
    n = y.size
    loss = float(np.mean(lse[:, 0] - logits[np.arange(n), y]))
    d_logits = np.exp(logits - lse)
    d_logits[np.arange(n), y] -= 1.0
    d_logits /= n
    d_z = d_logits @ params["W3"].T
    d_a = (d_z @ params["W2"].T) * (1.0 - h * h)
    grads = {
        "W3": z.T @ d_logits, "b3": d_logits.sum(axis=0),
        "W2": h.T @ d_z, "b2": d_z.sum(axis=0),
        "W1": x.T @ d_a, "b1": d_a.sum(axis=0),
    }
    return loss, grads


def train(ckpt: ModelCheckpoint, data: TrainBatchSet, cfg: SgdConfig = SgdConfig()):
    """Mini-batch SGD; returns the new checkpoint and the per-epoch loss curve.

    The epoch loss is the mean of the mini-batch losses evaluated before
    each update.
    """
    if ckpt.W3.shape[1] != data.n_classes:
        raise ParameterError(
            f"output layer has {ckpt.W3.shape[1]} units but data has {data.n_classes} classes")
    if cfg.max_epochs < 0 or cfg.batch_size < 1:
        raise ParameterError("invalid SGD configuration")
    rng = np.random.default_rng(cfg.seed)
    params = {k: v.copy() for k, v in ckpt.arrays().items()}
    x, y = data.inputs, data.targets
    n = y.size
    losses: list[float] = []
    best, stale = np.inf, 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        batch_losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            loss, grads = loss_and_gradients(params, x[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch + 1}, batch {lo // cfg.batch_size}")
            batch_losses.append(loss * idx.size)
            for k in PARAM_NAMES:
                params[k] -= cfg.learning_rate * grads[k]
        losses.append(float(np.sum(batch_losses) / n))
        if cfg.target_loss is not None and losses[-1] <= cfg.target_loss:
            break
        if losses[-1] < best - cfg.min_delta:
            best, stale = losses[-1], 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    new = ckpt.with_params(params, total_epochs=int(ckpt.meta.get("total_epochs", 0)) + len(losses))
    return new, np.array(losses)


def fine_tune(seed_ckpt: ModelCheckpoint, n_labels: int, data: TrainBatchSet,
              cfg: SgdConfig = SgdConfig(max_epochs=50), init_seed: int = 0):
    """Transfer both hidden layers from ``seed_ckpt`` and retrain for ``n_labels`` outputs.

    Hidden weights and biases are copied; the output layer is drawn fresh
    with Xavier initialisation (its shape generally differs from the seed's).
    """
    spec = seed_ckpt.spec
    if data.inputs.shape[1] != spec.input_dim:
        raise CheckpointError("incompatible seed checkpoint: input dimension differs")
    if n_labels != data.n_classes:
        raise ParameterError("label count does not match training data")
    rng = np.random.default_rng(init_seed)
    start = ModelCheckpoint(
        seed_ckpt.W1.copy(), seed_ckpt.b1.copy(), seed_ckpt.W2.copy(), seed_ckpt.b2.copy(),
        xavier_uniform(rng, spec.hidden2, n_labels), np.zeros(n_labels),
        meta={
            "recordings_seen": int(seed_ckpt.meta.get("recordings_seen", 0)),
            "total_epochs": int(seed_ckpt.meta.get("total_epochs", 0)),
            "created_from": seed_ckpt.id,
            "rng_seed": int(init_seed),
        },
    )
    tuned, losses = train(start, data, cfg)
    return tuned.with_params({}, recordings_seen=tuned.meta["recordings_seen"] + 1), losses


def check_compatible(a: ModelCheckpoint, b: ModelCheckpoint) -> None:
    sa, sb = a.spec, b.spec
    if (sa.input_dim, sa.hidden1, sa.hidden2) != (sb.input_dim, sb.hidden1, sb.hidden2):
        raise CheckpointError("incompatible seed checkpoint: hidden architecture differs")


def gradient_check(ckpt: ModelCheckpoint, inputs, targets, h: float = 1e-5,
                   perturb: float = 0.0) -> float:
    """Max relative error between backprop and central finite differences.

    ``perturb`` injects a fault for negative controls: every analytic
    gradient entry is offset by ``perturb`` times the largest gradient
    magnitude of its parameter array.
    """
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.int64)
    params = {k: v.copy() for k, v in ckpt.arrays().items()}
    _, grads = loss_and_gradients(params, x, y)
    worst = 0.0
    for name in PARAM_NAMES:
        g = grads[name]
        if perturb:
            g = g + perturb * np.max(np.abs(g))
        p = params[name]
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            lp, _ = loss_and_gradients(params, x, y)
            p[idx] = orig - h
            lm, _ = loss_and_gradients(params, x, y)
            p[idx] = orig
            num[idx] = (lp - lm) / (2.0 * h)
        denom = np.maximum(np.maximum(np.abs(g), np.abs(num)), 1e-8)
        worst = max(worst, float(np.max(np.abs(g - num) / denom)))
    return worst
