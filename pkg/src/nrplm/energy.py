"""Feedforward energy language model shared by both input encoders.

Per example::

    f     = concat of the n-1 context word features           (n-1)*m
    h     = act(W_h^T f + b_h)                                 h
    f_hat = W_y^T h + b_y                                      m
    logit_j = f_hat . F'_j   for every word j                  |V|
    P     = softmax(logits)

Subclasses decide how word features are looked up (``_input_features``),
what the output table ``F'`` is, and how gradients flow back into the
trainable feature matrix ``F``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .errors import NumericError, ParameterError

PARAM_NAMES = ("F", "W_h", "b_h", "W_y", "b_y")


def param_count(input_dim: int, m: int, n: int, h: int) -> int:
    """Trainable parameters: |x|*m + ((n-1)*m*h + h) + (h*m + m)."""
    for name, v in (("input_dim", input_dim), ("m", m), ("n", n), ("h", h)):
        if v < 1:
            raise ParameterError(f"{name} must be >= 1, got {v}")
    return input_dim * m + ((n - 1) * m * h + h) + (h * m + m)


@dataclass
class Forward:
    probabilities: np.ndarray  # (B, |V|)
    predicted: np.ndarray      # (B, m)
    cache: dict = field(default_factory=dict, repr=False)


class EnergyLM:
    kind = "abstract"

    def __init__(self, params: dict[str, np.ndarray], n: int, activation: str = "relu",
                 dropout_output: bool = False):
        missing = [p for p in PARAM_NAMES if p not in params]
        if missing:
            raise ParameterError(f"missing parameters: {missing}")
        if activation not in nx.ACTIVATIONS:
            raise ParameterError(f"unknown activation {activation!r}")
        self.params = params
        self.n = n
        self.activation = activation
        self.dropout_output = dropout_output
        self._check_shapes()

    # --- shape helpers ---------------------------------------------------

    @property
    def m(self) -> int:
        return self.params["F"].shape[1]

    @property
    def h(self) -> int:
        return self.params["W_h"].shape[1]

    @property
    def dtype(self):
        return self.params["F"].dtype

    @property
    def vocab_size(self) -> int:
        raise NotImplementedError

    @property
    def input_dim(self) -> int:
        return self.params["F"].shape[0]

    def param_count(self) -> int:
        return param_count(self.input_dim, self.m, self.n, self.h)

    def _check_shapes(self) -> None:
        p = self.params
        m, h = self.m, p["W_h"].shape[1]
        expected = {"W_h": ((self.n - 1) * m, h), "b_h": (h,), "W_y": (h, m), "b_y": (m,)}
        for name, shape in expected.items():
            if p[name].shape != shape:
                raise ParameterError(f"{name} has shape {p[name].shape}, expected {shape}")

    @staticmethod
    def init_params(input_dim: int, m: int, h: int, n: int, rng: np.random.Generator,
                    dtype=nx.DEFAULT_DTYPE, activation: str = "relu",
                    init_range: float = 0.01) -> dict[str, np.ndarray]:
        """He-normal for the ReLU layer, U[-init_range, init_range] elsewhere, zero biases."""
        fan_in = (n - 1) * m
        hidden = "he" if activation == "relu" else "uniform_range"
        lim = init_range
        return {
            "F": nx.init_params((input_dim, m), "uniform_range", rng, dtype, limit=lim),
            "W_h": nx.init_params((fan_in, h), hidden, rng, dtype, fan_in=fan_in, limit=lim),
            "b_h": nx.init_params((h,), "zeros", rng, dtype),
            "W_y": nx.init_params((h, m), "uniform_range", rng, dtype, limit=lim),
            "b_y": nx.init_params((m,), "zeros", rng, dtype),
        }

    # --- encoder hooks ----------------------------------------------------

    def _check_ids(self, ids: np.ndarray) -> None:
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise ParameterError(f"word id out of range [0, {self.vocab_size})")

    def _input_features(self, contexts: np.ndarray) -> np.ndarray:
        """(B, n-1) ids -> (B, n-1, m) features."""
        raise NotImplementedError

    def output_table(self) -> np.ndarray:
        """(|V|, m) features scored against the predicted vector."""
        raise NotImplementedError

    def _feature_grad(self, contexts, d_inputs, d_table, output_path: bool):
        raise NotImplementedError

    # --- forward / backward ---------------------------------------------

    def forward(self, contexts: np.ndarray, dropout_p: float = 0.0,
                rng: np.random.Generator | None = None, training: bool = False) -> Forward:
        contexts = np.asarray(contexts, dtype=np.int64)
        if contexts.ndim != 2 or contexts.shape[1] != self.n - 1:
            raise ParameterError(f"contexts must have shape (batch, {self.n - 1})")
        self._check_ids(contexts)
        p = self.params
        dtype = self.dtype
        drop = training and dropout_p > 0
        if drop and rng is None:
            raise ParameterError("training with dropout needs an rng")
        B = contexts.shape[0]

        feats = self._input_features(contexts)
        f = feats.reshape(B, -1)
        mask_f = nx.dropout_mask(f.shape, dropout_p, rng, dtype) if drop else None
        f_in = f * mask_f if drop else f
        pre = f_in @ p["W_h"] + p["b_h"]
        act = nx.activation(pre, self.activation).astype(dtype, copy=False)
        mask_h = nx.dropout_mask(act.shape, dropout_p, rng, dtype) if drop else None
        h_in = act * mask_h if drop else act
        f_hat = h_in @ p["W_y"] + p["b_y"]
        mask_y = None
        if drop and self.dropout_output:
            mask_y = nx.dropout_mask(f_hat.shape, dropout_p, rng, dtype)
            f_out = f_hat * mask_y
        else:
            f_out = f_hat
        table = self.output_table()
        logits = f_out @ table.T
        probs = nx.stable_softmax(logits)
        cache = dict(contexts=contexts, logits=logits, f_in=f_in, mask_f=mask_f, pre=pre, act=act,
                     mask_h=mask_h, h_in=h_in, f_out=f_out, mask_y=mask_y, table=table)
        return Forward(probs, f_hat, cache)

    def nll(self, contexts: np.ndarray, targets: np.ndarray) -> np.ndarray:
        """Per-example negative log-likelihood, inference mode.

        Computed as a float64 log-softmax of the logits rather than the log of
        the (possibly 32-bit) probabilities, with the same 1e-12 floor.
        """
        targets = np.asarray(targets, dtype=np.int64)
        self._check_ids(targets)
        fw = self.forward(contexts)
        logits = fw.cache["logits"].astype(np.float64)
        top = logits.max(axis=1, keepdims=True)
        lse = top[:, 0] + np.log(np.exp(logits - top).sum(axis=1))
        nll = lse - logits[np.arange(len(targets)), targets]
        return np.minimum(nll, -np.log(nx.CE_EPS))

    def loss(self, contexts, targets) -> float:
        return float(np.mean(self.nll(contexts, targets)))

    def loss_and_backward(self, contexts: np.ndarray, targets: np.ndarray,
                          dropout_p: float = 0.0, rng: np.random.Generator | None = None,
                          training: bool = True, output_path: bool = True):
        """Mean NLL of the batch and the gradient of every parameter tensor.

        ``output_path=False`` drops the normalisation-table contribution to
        the feature-matrix gradient (diagnostic ablation); the gradient for
        ``F`` is then row-sparse.
        """
        targets = np.asarray(targets, dtype=np.int64)
        self._check_ids(targets)
        fw = self.forward(contexts, dropout_p, rng, training)
        c = fw.cache
        p = self.params
        B = len(targets)
        loss = float(np.mean(nx.cross_entropy(fw.probabilities, targets)))
        if not np.isfinite(loss):
            raise NumericError("non-finite loss")

        d_logits = fw.probabilities.copy()
        d_logits[np.arange(B), targets] -= 1
        d_logits /= B
        d_table = d_logits.T @ c["f_out"]
        d_f_out = d_logits @ c["table"]
        d_f_hat = d_f_out * c["mask_y"] if c["mask_y"] is not None else d_f_out
        grads = {"W_y": c["h_in"].T @ d_f_hat, "b_y": d_f_hat.sum(axis=0)}
        d_h_in = d_f_hat @ p["W_y"].T
        d_act = d_h_in * c["mask_h"] if c["mask_h"] is not None else d_h_in
        d_pre = d_act * nx.activation_grad(c["pre"], c["act"], self.activation)
        grads["W_h"] = c["f_in"].T @ d_pre
        grads["b_h"] = d_pre.sum(axis=0)
        d_f_in = d_pre @ p["W_h"].T
        d_f = d_f_in * c["mask_f"] if c["mask_f"] is not None else d_f_in
        d_inputs = d_f.reshape(B, self.n - 1, self.m)
        grads["F"] = self._feature_grad(c["contexts"], d_inputs, d_table, output_path)
        for name in ("W_y", "b_y", "W_h", "b_h"):
            grads[name] = grads[name].astype(self.dtype, copy=False)
        return loss, grads

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}
