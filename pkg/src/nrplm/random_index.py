"""Sparse ternary/binary random index vectors.

Every index has exactly ``s`` non-zero entries out of ``k``. Ternary indices
split them into ceil(s/2) entries of +1 and floor(s/2) entries of -1, binary
indices hold only +1. No scaling factor is applied.
"""

from __future__ import annotations

import struct
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

from .errors import ConsistencyError, FormatError, ParameterError

TERNARY = "ternary"
BINARY = "binary"
MODES = (TERNARY, BINARY)

_LOOKUP_MAGIC = b"NRPRIDX\0"
_LOOKUP_VERSION = 1


@dataclass(frozen=True)
class RandomIndex:
    k: int
    positive: tuple[int, ...]
    negative: tuple[int, ...] = ()

    def __post_init__(self):
        for part in (self.positive, self.negative):
            if any(b <= a for a, b in zip(part, part[1:])):
                raise ParameterError("index positions must be strictly increasing")
            if part and (part[0] < 0 or part[-1] >= self.k):
                raise ParameterError(f"index position out of range [0, {self.k})")
        if set(self.positive) & set(self.negative):
            raise ParameterError("positive and negative positions overlap")

    @property
    def s(self) -> int:
        return len(self.positive) + len(self.negative)

    def positions(self) -> np.ndarray:
        return np.array(self.positive + self.negative, dtype=np.int64)

    def signs(self) -> np.ndarray:
        return np.array([1.0] * len(self.positive) + [-1.0] * len(self.negative))

    def to_dense(self, dtype=np.float64) -> np.ndarray:
        v = np.zeros(self.k, dtype=dtype)
        v[list(self.positive)] = 1
        v[list(self.negative)] = -1
        return v


def _check_params(k: int, s: int, mode: str) -> None:
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if not 1 <= s <= k:
        raise ParameterError(f"s must satisfy 1 <= s <= k (k={k}), got {s}")


def n_positive(s: int, mode: str) -> int:
    return s if mode == BINARY else (s + 1) // 2


def sample_positions(k: int, s: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` rows of ``s`` distinct positions drawn uniformly from [0, k).

    Within a row the order is itself uniformly random.
    """
    if 4 * s > k:
        out = np.empty((count, s), dtype=np.int64)
        step = max(1, 2_000_000 // k)
        for i in range(0, count, step):
            c = min(step, count - i)
            keys = rng.random((c, k))
            part = np.argpartition(keys, s - 1, axis=1)[:, :s]
            # argpartition does not randomise order inside the selected block
            shuffle = np.argsort(rng.random((c, s)), axis=1)
            out[i:i + c] = np.take_along_axis(part, shuffle, axis=1)
        return out
    out = rng.integers(0, k, size=(count, s))
    while True:
        srt = np.sort(out, axis=1)
        bad = np.flatnonzero((srt[:, 1:] == srt[:, :-1]).any(axis=1))
        if bad.size == 0:
            return out
        out[bad] = rng.integers(0, k, size=(bad.size, s))


def generate_random_index(k: int, s: int, mode: str = TERNARY,
                          rng: np.random.Generator | None = None) -> RandomIndex:
    _check_params(k, s, mode)
    rng = rng if rng is not None else np.random.default_rng()
    pos = sample_positions(k, s, 1, rng)[0]
    npos = n_positive(s, mode)
    return RandomIndex(k, tuple(sorted(int(p) for p in pos[:npos])),
                       tuple(sorted(int(p) for p in pos[npos:])))


def inner_product(a: RandomIndex, b: RandomIndex) -> int:
    if a.k != b.k:
        raise ParameterError(f"dimension mismatch: {a.k} != {b.k}")
    ap, an, bp, bn = set(a.positive), set(a.negative), set(b.positive), set(b.negative)
    return len(ap & bp) + len(an & bn) - len(ap & bn) - len(an & bp)


def inner_product_histogram(k: int, s: int, mode: str = TERNARY, pairs: int = 10_000,
                            rng: np.random.Generator | int | None = None) -> dict[int, int]:
    """Frequencies of inner products over independently sampled index pairs."""
    _check_params(k, s, mode)
    if pairs < 1:
        raise ParameterError(f"pairs must be >= 1, got {pairs}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    sign = np.ones(s, dtype=np.int64)
    sign[n_positive(s, mode):] = -1
    hist: Counter[int] = Counter()
    chunk = max(1, 4_000_000 // (s * s))
    for i in range(0, pairs, chunk):
        c = min(chunk, pairs - i)
        a = sample_positions(k, s, c, rng)
        b = sample_positions(k, s, c, rng)
        match = a[:, :, None] == b[:, None, :]
        dots = np.einsum("nij,i,j->n", match.astype(np.int64), sign, sign)
        vals, cnt = np.unique(dots, return_counts=True)
        hist.update(dict(zip(vals.tolist(), cnt.tolist())))
    return dict(sorted(hist.items()))


def write_histogram(path: str | Path, hist: Mapping[int, int]) -> None:
    with open(path, "w") as fh:
        fh.write("dot_value,count\n")
        for v, c in sorted(hist.items()):
            fh.write(f"{v},{c}\n")


def histogram_stats(hist: Mapping[int, int]) -> dict[str, float]:
    vals = np.array(list(hist.keys()), dtype=np.float64)
    cnts = np.array(list(hist.values()), dtype=np.float64)
    total = cnts.sum()
    mean = float((vals * cnts).sum() / total)
    var = float(((vals - mean) ** 2 * cnts).sum() / max(total - 1, 1))
    return {
        "pairs": int(total),
        "mean": mean,
        "var": var,
        "stderr": float(np.sqrt(var / total)),
        "nonzero_fraction": float(cnts[vals != 0].sum() / total),
    }


class RandomIndexLookup:
    """Word id -> RandomIndex table grown on demand.

    The i-th inserted index is drawn from a generator seeded with
    ``(seed, i)``, so a table is fully determined by its settings and the
    insertion order. Reads are lock-free; insertions take a lock.
    """

    def __init__(self, k: int, s: int, mode: str = TERNARY, seed: int = 0):
        _check_params(k, s, mode)
        self.k, self.s, self.mode, self.seed = k, s, mode, int(seed)
        self._table: dict[int, RandomIndex] = {}
        self._order: list[int] = []
        self._lock = threading.Lock()
        self._matrix_cache: tuple[int, sparse.csr_matrix] | None = None

    def __len__(self) -> int:
        return len(self._table)

    def __contains__(self, word_id: int) -> bool:
        return word_id in self._table

    def __getitem__(self, word_id: int) -> RandomIndex:
        return self._table[word_id]

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, RandomIndexLookup)
                and self.settings == other.settings
                and self._order == other._order
                and self._table == other._table)

    @property
    def insertions(self) -> int:
        return len(self._order)

    @property
    def settings(self) -> tuple[int, int, str, int]:
        return self.k, self.s, self.mode, self.seed

    def items(self):
        return ((w, self._table[w]) for w in self._order)

    def lookup_or_create(self, word_id: int) -> RandomIndex:
        if word_id < 0:
            raise ParameterError(f"word id must be >= 0, got {word_id}")
        r = self._table.get(word_id)
        if r is not None:
            return r
        with self._lock:
            r = self._table.get(word_id)
            if r is None:
                rng = np.random.default_rng([self.seed, len(self._order)])
                r = generate_random_index(self.k, self.s, self.mode, rng)
                self._insert(word_id, r)
        return r

    def ensure(self, word_ids: Iterable[int]) -> None:
        for w in word_ids:
            self.lookup_or_create(int(w))

    def _insert(self, word_id: int, r: RandomIndex) -> None:
        self._table[word_id] = r
        self._order.append(word_id)
        self._matrix_cache = None

    @classmethod
    def from_indices(cls, indices: Mapping[int, RandomIndex] | Iterable[RandomIndex],
                     s: int, mode: str = TERNARY, seed: int = 0) -> "RandomIndexLookup":
        """Build a lookup from explicit indices (word id order = iteration order)."""
        items = list(indices.items()) if isinstance(indices, Mapping) else list(enumerate(indices))
        if not items:
            raise ParameterError("no indices given")
        k = items[0][1].k
        lookup = cls(k, s, mode, seed)
        for w, r in items:
            if r.k != k:
                raise ParameterError("indices of mixed dimension")
            lookup._insert(int(w), r)
        return lookup

    def matrix(self, vocab_size: int, dtype=np.float64) -> sparse.csr_matrix:
        """The |V| x k sparse matrix whose row j is word j's index."""
        cached = self._matrix_cache
        if cached is not None and cached[0] == vocab_size and cached[1].dtype == dtype:
            return cached[1]
        indptr = np.zeros(vocab_size + 1, dtype=np.int64)
        cols, vals = [], []
        for j in range(vocab_size):
            r = self._table.get(j)
            if r is None:
                raise ConsistencyError(f"word id {j} has no random index")
            cols.append(r.positions())
            vals.append(r.signs())
            indptr[j + 1] = indptr[j] + r.s
        mat = sparse.csr_matrix(
            (np.concatenate(vals).astype(dtype), np.concatenate(cols), indptr),
            shape=(vocab_size, self.k))
        self._matrix_cache = (vocab_size, mat)
        return mat

    def collisions(self) -> int:
        """Number of words whose index is shared with at least one other word."""
        c = Counter(self._table.values())
        return sum(n for n in c.values() if n > 1)

    # persistence -----------------------------------------------------------

    def to_bytes(self) -> bytes:
        parts = [_LOOKUP_MAGIC,
                 struct.pack("<IIIBQQ", _LOOKUP_VERSION, self.k, self.s,
                             MODES.index(self.mode), self.seed, len(self._order))]
        for w in self._order:
            r = self._table[w]
            parts.append(struct.pack("<QI", w, len(r.positive)))
            parts.append(np.asarray(r.positive, dtype="<u4").tobytes())
            parts.append(struct.pack("<I", len(r.negative)))
            parts.append(np.asarray(r.negative, dtype="<u4").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "RandomIndexLookup":
        try:
            return cls._from_bytes(data)
        except (struct.error, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"corrupt random index lookup blob ({exc})") from None

    @classmethod
    def _from_bytes(cls, data: bytes) -> "RandomIndexLookup":
        if data[:8] != _LOOKUP_MAGIC:
            raise FormatError("not a random index lookup blob")
        version, k, s, mode, seed, count = struct.unpack_from("<IIIBQQ", data, 8)
        if version != _LOOKUP_VERSION:
            raise FormatError(f"unsupported lookup version {version}")
        lookup = cls(k, s, MODES[mode], seed)
        off = 8 + struct.calcsize("<IIIBQQ")
        for _ in range(count):
            w, npos = struct.unpack_from("<QI", data, off)
            off += 12
            pos = np.frombuffer(data, dtype="<u4", count=npos, offset=off)
            off += 4 * npos
            (nneg,) = struct.unpack_from("<I", data, off)
            off += 4
            neg = np.frombuffer(data, dtype="<u4", count=nneg, offset=off)
            off += 4 * nneg
            lookup._insert(w, RandomIndex(k, tuple(pos.tolist()), tuple(neg.tolist())))
        if off != len(data):
            raise FormatError("trailing bytes in lookup blob")
        return lookup

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "RandomIndexLookup":
        return cls.from_bytes(Path(path).read_bytes())
