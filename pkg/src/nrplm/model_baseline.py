"""1-of-V energy model: one embedding table shared by input lookup and output scoring."""

from __future__ import annotations

import numpy as np

from . import numerics as nx
from .energy import EnergyLM, Forward, param_count as _param_count


def param_count(vocab_size: int, m: int, n: int, h: int) -> int:
    return _param_count(vocab_size, m, n, h)


class BaselineLM(EnergyLM):
    kind = "baseline"

    @classmethod
    def create(cls, vocab_size: int, m: int, h: int, n: int, rng: np.random.Generator,
               activation: str = "relu", dtype=nx.DEFAULT_DTYPE, dropout_output: bool = False,
               init_range: float = 0.01):
        params = cls.init_params(vocab_size, m, h, n, rng, dtype, activation, init_range)
        return cls(params, n, activation, dropout_output)

    @property
    def vocab_size(self) -> int:
        return self.params["F"].shape[0]

    def _input_features(self, contexts):
        return self.params["F"][contexts]

    def output_table(self):
        return self.params["F"]

    def _feature_grad(self, contexts, d_inputs, d_table, output_path):
        F = self.params["F"]
        rows = contexts.reshape(-1)
        vals = d_inputs.reshape(-1, self.m)
        if not output_path:
            return nx.SparseRows.accumulate(rows, vals.astype(F.dtype), F.shape)
        grad = d_table.astype(F.dtype, copy=True)
        np.add.at(grad, rows, vals)
        return grad


__all__ = ["BaselineLM", "Forward", "param_count"]
