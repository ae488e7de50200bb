"""Activations, dropout, softmax/cross-entropy, initialisation, clipping and SGD.

Parameters are plain numpy arrays; a gradient set is a ``dict`` mapping
parameter names to arrays of the same shape or, for row-sparse updates of a
feature matrix, to :class:`SparseRows`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, MutableMapping

import numpy as np

from .errors import NumericError, ParameterError

DEFAULT_DTYPE = np.float32
CE_EPS = 1e-12

ACTIVATIONS = ("relu", "tanh", "elu", "sigmoid")


@dataclass
class SparseRows:
    """Row-sparse gradient: ``values[i]`` is the gradient of row ``rows[i]``.

    Rows are unique and sorted.
    """
    rows: np.ndarray
    values: np.ndarray
    shape: tuple[int, int]

    @classmethod
    def accumulate(cls, rows: np.ndarray, values: np.ndarray, shape) -> "SparseRows":
        uniq, inv = np.unique(rows, return_inverse=True)
        acc = np.zeros((len(uniq), values.shape[1]), dtype=values.dtype)
        np.add.at(acc, inv.ravel(), values)
        return cls(uniq, acc, tuple(shape))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=self.values.dtype)
        out[self.rows] = self.values
        return out

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.values.astype(np.float64) ** 2)))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def activation(x: np.ndarray, kind: str = "relu") -> np.ndarray:
    x = np.asarray(x)
    if kind == "relu":
        return relu(x)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "elu":
        return np.where(x >= 0, x, np.expm1(np.minimum(x, 0)))
    if kind == "sigmoid":
        return _sigmoid(np.asarray(x, dtype=np.result_type(x, np.float32)))
    raise ParameterError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_grad(pre: np.ndarray, out: np.ndarray, kind: str) -> np.ndarray:
    """d activation / d pre, given pre-activation and activation output."""
    if kind == "relu":
        return (pre > 0).astype(pre.dtype)
    if kind == "tanh":
        return 1 - out * out
    if kind == "elu":
        return np.where(pre >= 0, 1, out + 1).astype(pre.dtype)
    if kind == "sigmoid":
        return out * (1 - out)
    raise ParameterError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def dropout_mask(shape, p: float, rng: np.random.Generator, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Inverted-dropout mask: 0 with probability p, else 1/(1-p)."""
    if not 0 <= p < 1:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if p == 0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= p
    dtype = np.dtype(dtype)
    return keep.astype(dtype) / dtype.type(1 - p)


def dropout(x: np.ndarray, p: float, rng: np.random.Generator | None = None,
            training: bool = True) -> np.ndarray:
    if not 0 <= p < 1:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0:
        return x
    if rng is None:
        raise ParameterError("training-mode dropout needs an rng")
    return x * dropout_mask(x.shape, p, rng, dtype=x.dtype)


def stable_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    logits = np.asarray(logits)
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logit passed to softmax")
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(predicted: np.ndarray, target) -> np.ndarray | float:
    """``-ln predicted[target]`` with the probability floored at 1e-12.

    Accepts a single distribution with an int target, or a (batch, V) matrix
    with a (batch,) target array.
    """
    predicted = np.asarray(predicted)
    target = np.asarray(target)
    size = predicted.shape[-1]
    if np.any(target < 0) or np.any(target >= size):
        raise ParameterError(f"target id out of range [0, {size})")
    if predicted.ndim == 1:
        return float(-np.log(max(float(predicted[int(target)]), CE_EPS)))
    p = predicted[np.arange(len(target)), target]
    return -np.log(np.maximum(p.astype(np.float64), CE_EPS))


def grad_norm(g) -> float:
    if isinstance(g, SparseRows):
        return g.norm()
    return float(np.sqrt(np.sum(np.asarray(g, dtype=np.float64) ** 2)))


def clip_by_norm(g, threshold: float):
    """Rescale ``g`` to norm ``threshold`` when its L2 norm exceeds it."""
    if threshold <= 0:
        raise ParameterError(f"clip threshold must be > 0, got {threshold}")
    norm = grad_norm(g)
    if norm <= threshold:
        return g
    scale = threshold / norm
    if isinstance(g, SparseRows):
        return SparseRows(g.rows, (g.values * scale).astype(g.values.dtype), g.shape)
    return (g * scale).astype(g.dtype)


def clip_all(grads: Mapping[str, object], threshold: float) -> dict:
    """Clip every tensor by its own norm (local, not global, clipping)."""
    return {name: clip_by_norm(g, threshold) for name, g in grads.items()}


def sgd_step(params: MutableMapping[str, np.ndarray] | np.ndarray, grads, lr: float):
    """In-place ``p -= lr * g``; row-sparse gradients touch only their rows.

    Works on a single array or on matching dicts of arrays. Returns ``params``.
    """
    if lr <= 0:
        raise ParameterError(f"learning rate must be > 0, got {lr}")
    if isinstance(params, np.ndarray):
        _update(params, grads, lr)
        return params
    for name, g in grads.items():
        if name not in params:
            raise ParameterError(f"gradient for unknown parameter {name!r}")
        _update(params[name], g, lr)
    return params


def _update(p: np.ndarray, g, lr: float) -> None:
    if isinstance(g, SparseRows):
        if tuple(g.shape) != p.shape:
            raise ParameterError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        p[g.rows] -= p.dtype.type(lr) * g.values.astype(p.dtype)
        return
    if g.shape != p.shape:
        raise ParameterError(f"shape mismatch: param {p.shape}, grad {g.shape}")
    p -= p.dtype.type(lr) * g.astype(p.dtype, copy=False)


def init_params(shape, scheme: str, rng: np.random.Generator, dtype=DEFAULT_DTYPE,
                fan_in: int | None = None, limit: float = 0.01) -> np.ndarray:
    """Weight initialisation.

    ``uniform_range``: U[-limit, limit]; ``he``: N(0, 2 / fan_in) with fan_in
    defaulting to ``shape[0]``; ``zeros``: biases.
    """
    shape = tuple(shape)
    if scheme == "zeros":
        return np.zeros(shape, dtype=dtype)
    if scheme == "uniform_range":
        return rng.uniform(-limit, limit, size=shape).astype(dtype)
    if scheme == "he":
        fan_in = fan_in if fan_in is not None else shape[0]
        return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
    raise ParameterError(f"unknown init scheme {scheme!r}")


def finite_diff_gradient(loss_fn: Callable[[], float], params: Mapping[str, np.ndarray] | np.ndarray,
                         epsilon: float = 1e-6) -> dict[str, np.ndarray] | np.ndarray:
    """Central-difference gradient of ``loss_fn`` w.r.t. every coordinate.

    ``loss_fn`` takes no arguments and reads the parameter arrays, which are
    perturbed in place and restored. Use float64 parameters.
    """
    if epsilon <= 0:
        raise ParameterError("epsilon must be > 0")
    single = isinstance(params, np.ndarray)
    tensors = {"_": params} if single else params
    out = {}
    for name, p in tensors.items():
        g = np.zeros(p.shape, dtype=np.float64)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss_fn()
            flat[i] = orig - epsilon
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * epsilon)
        out[name] = g
    return out["_"] if single else out
