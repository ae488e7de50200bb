"""Energy model whose word features are signed sums of rows of a k x m matrix.

A word's feature is ``r_w @ F`` for its fixed sparse random index ``r_w``.
The normalisation table is ``F' = R @ F`` with ``R`` the |V| x k matrix of
all stored indices, recomputed from the current ``F`` on every forward pass.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import numerics as nx
from .energy import EnergyLM, param_count as _param_count
from .errors import ParameterError
from .random_index import RandomIndex, RandomIndexLookup


def param_count(k: int, m: int, n: int, h: int) -> int:
    # the random index table is fixed, so it is not counted
    return _param_count(k, m, n, h)


def compose_features(F: np.ndarray, indices: Sequence[RandomIndex]) -> np.ndarray:
    """Row b is sum_c r_b[c] * F[c]; touches only the s non-zero rows per index."""
    k, m = F.shape
    out = np.zeros((len(indices), m), dtype=F.dtype)
    for b, r in enumerate(indices):
        if r.k != k:
            raise ParameterError(f"index dimension {r.k} != feature rows {k}")
        if r.positive:
            out[b] += F[list(r.positive)].sum(axis=0)
        if r.negative:
            out[b] -= F[list(r.negative)].sum(axis=0)
    return out


class NRPLM(EnergyLM):
    kind = "nrp"

    def __init__(self, params, n, lookup: RandomIndexLookup, vocab_size: int,
                 activation="relu", dropout_output=False):
        self.lookup = lookup
        self._vocab_size = vocab_size
        super().__init__(params, n, activation, dropout_output)
        if params["F"].shape[0] != lookup.k:
            raise ParameterError(f"F has {params['F'].shape[0]} rows but indices have k={lookup.k}")
        lookup.ensure(range(vocab_size))

    @classmethod
    def create(cls, vocab_size: int, k: int, s: int, m: int, h: int, n: int,
               rng: np.random.Generator, index_seed: int = 0, mode: str = "ternary",
               activation: str = "relu", dtype=nx.DEFAULT_DTYPE, dropout_output: bool = False,
               lookup: RandomIndexLookup | None = None, init_range: float = 0.01):
        lookup = lookup if lookup is not None else RandomIndexLookup(k, s, mode, index_seed)
        params = cls.init_params(lookup.k, m, h, n, rng, dtype, activation, init_range)
        return cls(params, n, lookup, vocab_size, activation, dropout_output)

    @property
    def vocab_size(self) -> int:
        return self._vocab_size

    @property
    def k(self) -> int:
        return self.lookup.k

    def extend_vocabulary(self, new_size: int) -> None:
        """Give every id below ``new_size`` an index; new words join the output table at once."""
        if new_size > self._vocab_size:
            self.lookup.ensure(range(self._vocab_size, new_size))
            self._vocab_size = new_size

    def index_matrix(self):
        return self.lookup.matrix(self._vocab_size, dtype=self.dtype)

    def _input_features(self, contexts):
        R_ctx = self.index_matrix()[contexts.reshape(-1)]
        feats = R_ctx @ self.params["F"]
        return np.asarray(feats).reshape(contexts.shape[0], self.n - 1, self.m)

    def output_table(self):
        return np.asarray(self.index_matrix() @ self.params["F"])

    def _feature_grad(self, contexts, d_inputs, d_table, output_path):
        F = self.params["F"]
        R = self.index_matrix()
        R_ctx = R[contexts.reshape(-1)]
        ctx_grad = np.asarray(R_ctx.T @ d_inputs.reshape(-1, self.m))
        if not output_path:
            rows = np.unique(R_ctx.indices)
            return nx.SparseRows(rows, ctx_grad[rows].astype(F.dtype), F.shape)
        return (np.asarray(R.T @ d_table) + ctx_grad).astype(F.dtype, copy=False)
