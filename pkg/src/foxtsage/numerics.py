"""Dense float64 linear algebra helpers and the seeded random stream.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. The helpers
here add shape checking and numerically stable activations on top.

Random numbers come from :class:`Rng`, a thin wrapper over numpy's PCG64 bit
generator. Gaussian samples use numpy's ziggurat transform
(``Generator.standard_normal``); uniform samples use
``Generator.random`` (53-bit doubles in ``[0, 1)``). Both are stable for a
given seed under numpy's stream-compatibility policy.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are not conformable."""


class BoundsError(ValueError):
    """Raised when an interval or fraction argument is out of range."""


class DomainError(ValueError):
    """Raised when a scalar argument lies outside a function's domain."""


def as_matrix(x) -> np.ndarray:
    """Coerce ``x`` to a 2-D float64 array (vectors become a single row)."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        return a.reshape(1, 1)
    if a.ndim == 1:
        return a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def relu(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_grad(x) -> np.ndarray:
    # subgradient at exactly 0 is 0
    return (np.asarray(x, dtype=np.float64) > 0.0).astype(np.float64)


def softmax_rows(x) -> np.ndarray:
    x = as_matrix(x)
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def clip(x: float, lo: float, hi: float) -> float:
    if lo > hi:
        raise BoundsError(f"lower bound {lo} exceeds upper bound {hi}")
    return min(max(x, lo), hi)


class Rng:
    """Seeded PCG64 stream.

    ``Rng.derive(root, a, b, ...)`` builds an independent stream from a root
    seed plus a path of non-negative integers, so parallel workers can each own
    a generator whose samples do not depend on scheduling.
    """

    algorithm = "PCG64/numpy-ziggurat-normal"

    def __init__(self, seed: int | np.random.SeedSequence = 0):
        if isinstance(seed, np.random.SeedSequence):
            self._gen = np.random.Generator(np.random.PCG64(seed))
        else:
            self._gen = np.random.Generator(np.random.PCG64(int(seed)))

    @classmethod
    def derive(cls, root: int, *path: int) -> "Rng":
        return cls(np.random.SeedSequence([int(root), *[int(p) for p in path]]))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def gaussian(self) -> float:
        return float(self._gen.standard_normal())

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        if lo > hi:
            raise BoundsError(f"lower bound {lo} exceeds upper bound {hi}")
        v = lo + (hi - lo) * float(self._gen.random())
        # rounding can land exactly on hi; keep the interval half-open
        return float(np.nextafter(hi, lo)) if v >= hi > lo else v

    def uniform_array(self, lo: float, hi: float, shape) -> np.ndarray:
        if lo > hi:
            raise BoundsError(f"lower bound {lo} exceeds upper bound {hi}")
        v = lo + (hi - lo) * self._gen.random(shape)
        if hi > lo:
            np.minimum(v, np.nextafter(hi, lo), out=v)
        return v

    def gaussian_array(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, high: int) -> int:
        return int(self._gen.integers(high))

    def state(self) -> dict:
        return self._gen.bit_generator.state

    def copy(self) -> "Rng":
        clone = Rng(0)
        clone._gen.bit_generator.state = self._gen.bit_generator.state
        return clone


def gaussian(rng: Rng) -> float:
    return rng.gaussian()


def uniform(rng: Rng, lo: float, hi: float) -> float:
    return rng.uniform(lo, hi)
