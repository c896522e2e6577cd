"""Classifiers with hand-written backprop.

Three architectures share one interface:

* ``logreg``          softmax(x W + b)
* ``logreg_dropout``  inverted dropout on the inputs, then logreg
* ``mlp``             two ReLU hidden layers followed by a softmax layer

Parameters live in a single contiguous float64 buffer (:class:`ParamSet`);
per-layer arrays are views into it, so optimizers can update everything with
one vectorised expression.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import BoundsError, Rng, ShapeError, relu, relu_grad, softmax_rows

ARCHITECTURES = ("logreg", "logreg_dropout", "mlp")
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelSpec:
    arch: str
    input_dim: int
    num_classes: int
    hidden_dims: tuple[int, int] = (128, 128)
    dropout_rate: float = 0.5

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}; expected one of {ARCHITECTURES}")
        if self.arch == "mlp" and len(self.hidden_dims) != 2:
            raise ValueError("mlp takes exactly two hidden layers")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise BoundsError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.input_dim < 1 or self.num_classes < 2:
            raise ValueError("need input_dim >= 1 and num_classes >= 2")

    def layer_shapes(self) -> list[tuple[str, tuple[int, int]]]:
        if self.arch == "mlp":
            h1, h2 = self.hidden_dims
            dims = [self.input_dim, h1, h2, self.num_classes]
            out = []
            for i in range(3):
                out.append((f"W{i + 1}", (dims[i], dims[i + 1])))
                out.append((f"b{i + 1}", (1, dims[i + 1])))
            return out
        return [("W", (self.input_dim, self.num_classes)), ("b", (1, self.num_classes))]


class ParamSet:
    """Named float64 tensors backed by one flat buffer."""

    def __init__(self, shapes, flat: np.ndarray | None = None):
        self.shapes = [(name, tuple(shape)) for name, shape in shapes]
        size = sum(int(np.prod(s)) for _, s in self.shapes)
        if flat is None:
            flat = np.zeros(size)
        flat = np.ascontiguousarray(flat, dtype=np.float64)
        if flat.shape != (size,):
            raise ShapeError(f"flat buffer has shape {flat.shape}, expected ({size},)")
        self.flat = flat
        self._views = {}
        off = 0
        for name, shape in self.shapes:
            k = int(np.prod(shape))
            self._views[name] = self.flat[off:off + k].reshape(shape)
            off += k

    def __getitem__(self, name: str) -> np.ndarray:
        return self._views[name]

    def __iter__(self):
        return iter(self._views)

    def items(self):
        return self._views.items()

    @property
    def size(self) -> int:
        return self.flat.shape[0]

    def clone(self) -> "ParamSet":
        return ParamSet(self.shapes, self.flat.copy())

    def zeros_like(self) -> "ParamSet":
        return ParamSet(self.shapes)

    def congruent(self, other: "ParamSet") -> bool:
        return self.shapes == other.shapes

    def check_congruent(self, other: "ParamSet"):
        if not self.congruent(other):
            raise ShapeError(f"parameter layouts differ: {self.shapes} vs {other.shapes}")

    def __repr__(self):
        inner = ", ".join(f"{n}{s}" for n, s in self.shapes)
        return f"ParamSet({inner})"


Gradient = ParamSet


def _init_std(fan_in: int, feeds_relu: bool) -> float:
    # He scaling ahead of ReLU, LeCun scaling otherwise
    return np.sqrt((2.0 if feeds_relu else 1.0) / fan_in)


def init_params(spec: ModelSpec, rng: Rng) -> ParamSet:
    """Fan-in scaled uniform weights, zero biases.

    Each weight is drawn from U(-a, a) with ``a = sqrt(3) * std`` so the
    sample standard deviation matches ``std`` (see ``weight_std``).
    """
    params = ParamSet(spec.layer_shapes())
    for name, shape in params.shapes:
        if name.startswith("W"):
            a = np.sqrt(3.0) * weight_std(spec, name)
            params[name][...] = rng.uniform_array(-a, a, shape)
    return params


def weight_std(spec: ModelSpec, name: str) -> float:
    shape = dict(spec.layer_shapes())[name]
    feeds_relu = spec.arch == "mlp" and name in ("W1", "W2")
    return _init_std(shape[0], feeds_relu)


@dataclass
class _Cache:
    x: np.ndarray
    probs: np.ndarray
    hidden: list = field(default_factory=list)  # (pre-activation, activation) per hidden layer
    mask: np.ndarray | None = None


def _check_input(spec: ModelSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ShapeError(f"input has shape {x.shape}, model expects (N, {spec.input_dim})")
    return x


def _forward(spec: ModelSpec, params: ParamSet, x, mode: str, rng: Rng | None) -> _Cache:
    x = _check_input(spec, x)
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if spec.arch == "mlp":
        cache = _Cache(x=x, probs=None)
        a = x
        for i in (1, 2):
            z = a @ params[f"W{i}"] + params[f"b{i}"]
            a = relu(z)
            cache.hidden.append((z, a))
        cache.probs = softmax_rows(a @ params["W3"] + params["b3"])
        return cache

    mask = None
    xin = x
    if spec.arch == "logreg_dropout" and mode == "train" and spec.dropout_rate > 0:
        if rng is None:
            raise ValueError("train-mode dropout needs an Rng")
        keep = 1.0 - spec.dropout_rate
        mask = (rng.uniform_array(0.0, 1.0, x.shape) < keep) / keep
        xin = x * mask
    probs = softmax_rows(xin @ params["W"] + params["b"])
    return _Cache(x=xin, probs=probs, mask=mask)


def forward(spec: ModelSpec, params: ParamSet, x, mode: str = "eval", rng: Rng | None = None) -> np.ndarray:
    """Class probabilities, one simplex row per sample.

    Binary problems use a 2-way softmax rather than a single sigmoid unit.
    """
    return _forward(spec, params, x, mode, rng).probs


def cross_entropy_loss(probs, y_onehot) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    y_onehot = np.asarray(y_onehot, dtype=np.float64)
    if probs.shape != y_onehot.shape:
        raise ShapeError(f"prediction shape {probs.shape} != target shape {y_onehot.shape}")
    clamped = np.clip(probs, PROB_FLOOR, 1.0)
    return float(-np.sum(y_onehot * np.log(clamped)) / probs.shape[0])


def per_sample_loss(probs, y_onehot) -> np.ndarray:
    clamped = np.clip(np.asarray(probs, dtype=np.float64), PROB_FLOOR, 1.0)
    return -np.sum(np.asarray(y_onehot) * np.log(clamped), axis=1)


def backward(spec: ModelSpec, params: ParamSet, x, y_onehot, mode: str = "eval",
             rng: Rng | None = None) -> tuple[float, ParamSet]:
    """Mean cross-entropy and its exact gradient with respect to every parameter.

    In train mode the dropout mask is drawn from ``rng`` exactly as
    :func:`forward` would draw it, so a forward/backward pair fed identically
    seeded generators sees the same mask.
    """
    cache = _forward(spec, params, x, mode, rng)
    y_onehot = np.asarray(y_onehot, dtype=np.float64)
    if y_onehot.shape != cache.probs.shape:
        raise ShapeError(f"target shape {y_onehot.shape} != prediction shape {cache.probs.shape}")
    n = cache.probs.shape[0]
    loss = cross_entropy_loss(cache.probs, y_onehot)

    # d(loss)/d(logits) for softmax + CE; rows whose true-class probability
    # sits below the clamp floor have a flat loss and get zero gradient
    delta = (cache.probs - y_onehot) / n
    p_true = np.sum(cache.probs * y_onehot, axis=1)
    delta[p_true < PROB_FLOOR] = 0.0

    grad = params.zeros_like()
    if spec.arch == "mlp":
        (z1, a1), (z2, a2) = cache.hidden
        grad["W3"][...] = a2.T @ delta
        grad["b3"][...] = delta.sum(axis=0, keepdims=True)
        d2 = (delta @ params["W3"].T) * relu_grad(z2)
        grad["W2"][...] = a1.T @ d2
        grad["b2"][...] = d2.sum(axis=0, keepdims=True)
        d1 = (d2 @ params["W2"].T) * relu_grad(z1)
        grad["W1"][...] = cache.x.T @ d1
        grad["b1"][...] = d1.sum(axis=0, keepdims=True)
    else:
        grad["W"][...] = cache.x.T @ delta
        grad["b"][...] = delta.sum(axis=0, keepdims=True)
    return loss, grad


def predict_labels(probs) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(np.asarray(probs), axis=1)


CHECKPOINT_MAGIC = b"FXTP"
CHECKPOINT_VERSION = 1


def save_params(params: ParamSet, path):
    """Write a checkpoint.

    Layout (little-endian): magic ``FXTP``, u32 version, u32 tensor count, then
    per tensor: u16 name length, UTF-8 name, u32 ndim, u32 dims, f64 payload.
    """
    out = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(params.shapes))]
    for name, shape in params.shapes:
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<I", len(shape)) + struct.pack(f"<{len(shape)}I", *shape))
        out.append(np.ascontiguousarray(params[name], dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(out))


def load_params(path) -> ParamSet:
    buf = Path(path).read_bytes()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a parameter checkpoint")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 12
    shapes, chunks = [], []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<I", buf, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        k = int(np.prod(shape))
        if off + 8 * k > len(buf):
            raise ValueError(f"{path}: truncated payload for tensor {name!r}")
        chunks.append(np.frombuffer(buf, dtype="<f8", count=k, offset=off))
        off += 8 * k
        shapes.append((name, shape))
    flat = np.concatenate(chunks) if chunks else np.zeros(0)
    return ParamSet(shapes, flat.astype(np.float64))
