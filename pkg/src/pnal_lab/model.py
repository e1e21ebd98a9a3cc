"""Per-point classifier: 9 -> h -> h -> M perceptron with tanh and softmax head."""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np

N_FEATURES = 9


@dataclass
class ModelParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, f.name) for f in fields(self)]

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def map(self, fn) -> "ModelParams":
        return ModelParams(*[fn(a) for a in self.arrays()])

    def copy(self) -> "ModelParams":
        return self.map(np.copy)

    @property
    def num_classes(self) -> int:
        return self.W3.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]


def init_params(num_classes: int, hidden: int = 64, seed: int = 0, dtype=np.float64) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    shapes = [(N_FEATURES, hidden), (hidden, hidden), (hidden, num_classes)]
    arrs = []
    for fan_in, fan_out in shapes:
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        arrs.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)).astype(dtype))
        arrs.append(np.zeros(fan_out, dtype=dtype))
    return ModelParams(*arrs)


def zeros_like(params: ModelParams) -> ModelParams:
    return params.map(np.zeros_like)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(params: ModelParams, x: np.ndarray):
    x = np.asarray(x, dtype=params.W1.dtype)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input features")
    h1 = np.tanh(x @ params.W1 + params.b1)
    h2 = np.tanh(h1 @ params.W2 + params.b2)
    logits = h2 @ params.W3 + params.b3
    return x, h1, h2, logits


def forward(params: ModelParams, features) -> np.ndarray:
    return softmax(_forward(params, features)[3])


def predict(params: ModelParams, features) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class id on ties
    return np.argmax(forward(params, features), axis=1)


@dataclass(frozen=True)
class LossKind:
    name: str = "ce"
    q_gce: float = 0.7
    alpha: float = 0.1
    beta: float = 1.0
    log_zero_floor: float = -4.0

    def __post_init__(self):
        if self.name not in ("ce", "gce", "sce"):
            raise ValueError(f"unknown loss {self.name!r}")
        if not 0 < self.q_gce <= 1:
            raise ValueError("q_gce must lie in (0, 1]")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")


CE = LossKind("ce")


def _loss_terms(probs, labels, kind: LossKind):
    """Per-point loss and its gradient with respect to the logits."""
    n = len(labels)
    rows = np.arange(n)
    py = probs[rows, labels]
    onehot = np.zeros_like(probs)
    onehot[rows, labels] = 1.0
    # d p_y / d z = p_y * (onehot - p)
    dpy = py[:, None] * (onehot - probs)
    if kind.name == "ce":
        with np.errstate(divide="ignore"):
            loss = -np.log(py)
        return loss, probs - onehot
    if kind.name == "gce":
        q = kind.q_gce
        loss = (1.0 - py ** q) / q
        return loss, -(py ** (q - 1))[:, None] * dpy
    # SCE: alpha * CE + beta * RCE, RCE = -A * (1 - p_y) with A the log floor
    a = kind.log_zero_floor
    with np.errstate(divide="ignore"):
        ce = -np.log(py)
    rce = -a * (1.0 - py)
    loss = kind.alpha * ce + kind.beta * rce
    grad = kind.alpha * (probs - onehot) + kind.beta * a * dpy
    return loss, grad


class LossResult(NamedTuple):
    loss: float
    grad: ModelParams
    n_active: int  # 0 flags an all-zero mask


def loss_and_grad(params: ModelParams, features, labels, mask=None, kind: LossKind = CE) -> LossResult:
    """Masked mean loss over the batch and its exact gradient."""
    return backward(params, _forward(params, features), labels, mask, kind)


def backward(params: ModelParams, cache, labels, mask=None, kind: LossKind = CE) -> LossResult:
    """Loss and gradient from the activations of a previous ``_forward`` call."""
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    mask = np.ones(n) if mask is None else np.asarray(mask, dtype=float)
    if mask.shape != (n,):
        raise ValueError("mask length must match batch size")
    if n and (labels.min() < 0 or labels.max() >= params.num_classes):
        raise ValueError("label out of range")
    n_active = int(mask.sum())
    if n_active == 0:
        return LossResult(0.0, zeros_like(params), 0)
    x, h1, h2, logits = cache
    probs = softmax(logits)
    per_point, dlogits = _loss_terms(probs, labels, kind)
    w = (mask / n_active).astype(params.W1.dtype)
    active = mask > 0
    loss = float(np.sum(np.where(active, per_point, 0.0) * w))
    dz3 = np.where(active[:, None], dlogits, 0.0) * w[:, None]
    dW3 = h2.T @ dz3
    db3 = dz3.sum(0)
    dz2 = (dz3 @ params.W3.T) * (1.0 - h2 ** 2)
    dW2 = h1.T @ dz2
    db2 = dz2.sum(0)
    dz1 = (dz2 @ params.W2.T) * (1.0 - h1 ** 2)
    dW1 = x.T @ dz1
    db1 = dz1.sum(0)
    return LossResult(loss, ModelParams(dW1, db1, dW2, db2, dW3, db3), n_active)


def sgd_step(params: ModelParams, grad: ModelParams, lr: float, momentum: float,
             velocity: ModelParams) -> tuple[ModelParams, ModelParams]:
    """Heavy-ball momentum: v <- mu v + g ; p <- p - lr v."""
    new_v = ModelParams(*[momentum * v + g for v, g in zip(velocity.arrays(), grad.arrays())])
    new_p = ModelParams(*[p - lr * v for p, v in zip(params.arrays(), new_v.arrays())])
    return new_p, new_v


# ------------------------------------------------------------- checkpoint

def save_params(params: ModelParams, path) -> None:
    """``.npz`` archive with arrays W1, b1, W2, b2, W3, b3 (shapes carried by npz)."""
    with open(Path(path), "wb") as f:
        np.savez(f, **dict(zip(ModelParams.names(), params.arrays())))


def load_params(path) -> ModelParams:
    with np.load(Path(path)) as z:
        missing = set(ModelParams.names()) - set(z.files)
        if missing:
            raise ValueError(f"checkpoint lacks {sorted(missing)}")
        p = ModelParams(*[z[k] for k in ModelParams.names()])
    h, m = p.hidden, p.num_classes
    expect = [(N_FEATURES, h), (h,), (h, h), (h,), (h, m), (m,)]
    if [a.shape for a in p.arrays()] != expect:
        raise ValueError("checkpoint shapes inconsistent")
    return p
