"""Token ingestion, capped vocabularies and shuffled n-gram mini-batches."""

from __future__ import annotations

import logging
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import FormatError, ParameterError

log = logging.getLogger(__name__)

UNK = "<unk>"
EOS = "<eos>"

_VOCAB_MAGIC = b"NRPVOCAB"
_VOCAB_VERSION = 1


class Vocabulary:
    """Immutable bidirectional token <-> id map.

    The unknown token always owns id 0; the remaining ids follow descending
    frequency (ties by first occurrence).
    """

    def __init__(self, tokens: Sequence[str], capacity: int | None = None, unk: str = UNK):
        if not tokens or tokens[0] != unk:
            tokens = [unk] + [t for t in tokens if t != unk]
        self.id_to_token: tuple[str, ...] = tuple(tokens)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ParameterError("duplicate tokens in vocabulary")
        self.unk_id = 0
        self.unk = unk
        self.capacity = capacity if capacity is not None else len(self.id_to_token)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)}, unk={self.unk!r})"

    def encode(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)

    def decode(self, idx: int) -> str:
        return self.id_to_token[idx]

    def encode_all(self, tokens: Iterable[str]) -> np.ndarray:
        get = self.token_to_id.get
        return np.fromiter((get(t, 0) for t in tokens), dtype=np.int64)

    def save(self, path: str | Path) -> None:
        """Write the binary cache: magic, version, size, then length-prefixed UTF-8 tokens."""
        with open(path, "wb") as fh:
            fh.write(_VOCAB_MAGIC)
            fh.write(struct.pack("<II", _VOCAB_VERSION, len(self)))
            for tok in self.id_to_token:
                raw = tok.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:8] != _VOCAB_MAGIC:
            raise FormatError(f"{path}: not a vocabulary cache")
        try:
            version, size = struct.unpack_from("<II", data, 8)
            if version != _VOCAB_VERSION:
                raise FormatError(f"{path}: unsupported vocabulary version {version}")
            off = 16
            tokens = []
            for _ in range(size):
                (n,) = struct.unpack_from("<I", data, off)
                off += 4
                if off + n > len(data):
                    raise FormatError(f"{path}: truncated vocabulary cache")
                tokens.append(data[off:off + n].decode("utf-8"))
                off += n
        except (struct.error, UnicodeDecodeError) as exc:
            raise FormatError(f"{path}: corrupt vocabulary cache ({exc})") from None
        if off != len(data):
            raise FormatError(f"{path}: trailing bytes in vocabulary cache")
        if not tokens:
            raise FormatError(f"{path}: empty vocabulary cache")
        return cls(tokens, unk=tokens[0])


def build_vocabulary(tokens: Iterable[str], capacity: int, unk: str = UNK) -> Vocabulary:
    """Keep the ``capacity`` most frequent tokens plus ``unk``.

    An ``unk`` string already present in the stream competes for a slot like
    any other token, so a pre-processed corpus that already contains ``<unk>``
    yields exactly ``capacity`` entries.
    """
    if capacity < 1:
        raise ParameterError(f"capacity must be >= 1, got {capacity}")
    counts: Counter[str] = Counter()
    first: dict[str, int] = {}
    for i, tok in enumerate(tokens):
        counts[tok] += 1
        first.setdefault(tok, i)
    ranked = sorted(counts, key=lambda t: (-counts[t], first[t]))[:capacity]
    return Vocabulary([unk] + [t for t in ranked if t != unk], capacity=capacity, unk=unk)


def read_tokens(path: str | Path, eos: str | None = EOS) -> list[str]:
    """Whitespace tokens of a file, one sentence per line.

    With ``eos`` set, the marker is appended after every non-empty line.
    """
    out: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            toks = line.split()
            if not toks:
                continue
            out.extend(toks)
            if eos:
                out.append(eos)
    return out


@dataclass(frozen=True)
class NGramWindow:
    context: tuple[int, ...]
    target: int


@dataclass
class NGramBatch:
    contexts: np.ndarray  # (batch, n - 1) int64
    targets: np.ndarray   # (batch,) int64

    def __post_init__(self):
        if self.contexts.ndim != 2 or self.targets.shape != (self.contexts.shape[0],):
            raise ParameterError("contexts must be (batch, n-1) and targets (batch,)")
        if len(self.targets) < 1:
            raise ParameterError("empty batch")

    def __len__(self) -> int:
        return len(self.targets)


def window_matrix(ids: Sequence[int] | np.ndarray, n: int, pad_start: bool = False,
                  pad_id: int = 0) -> np.ndarray:
    """All sliding windows of size ``n`` as an (L - n + 1, n) array.

    Columns ``[:n-1]`` are the context, the last column the target. With
    ``pad_start`` the stream is left-padded with ``pad_id`` so every token
    becomes a target once.
    """
    if n < 2:
        raise ParameterError(f"window size must be >= 2, got {n}")
    ids = np.asarray(ids, dtype=np.int64)
    if pad_start:
        ids = np.concatenate([np.full(n - 1, pad_id, dtype=np.int64), ids])
    if len(ids) < n:
        if len(ids):
            log.warning("sequence of length %d is shorter than window size %d", len(ids), n)
        return np.empty((0, n), dtype=np.int64)
    return np.lib.stride_tricks.sliding_window_view(ids, n).copy()


def sliding_windows(ids: Sequence[int], n: int, pad_start: bool = False,
                    pad_id: int = 0) -> list[NGramWindow]:
    mat = window_matrix(ids, n, pad_start=pad_start, pad_id=pad_id)
    return [NGramWindow(tuple(int(c) for c in row[:-1]), int(row[-1])) for row in mat]


def _as_matrix(windows) -> np.ndarray:
    if isinstance(windows, np.ndarray):
        return windows
    windows = list(windows)
    if not windows:
        return np.empty((0, 2), dtype=np.int64)
    return np.array([w.context + (w.target,) for w in windows], dtype=np.int64)


def make_batches(windows, batch_size: int, seed: int | np.random.Generator | None = None,
                 shuffle: bool = True) -> list[NGramBatch]:
    """Split windows into mini-batches after a seeded uniform permutation.

    ``windows`` is either a window matrix from :func:`window_matrix` or a
    sequence of :class:`NGramWindow`. The last batch may be short.
    """
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    mat = _as_matrix(windows)
    if shuffle:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        mat = mat[rng.permutation(len(mat))]
    return [NGramBatch(np.ascontiguousarray(mat[i:i + batch_size, :-1]),
                       np.ascontiguousarray(mat[i:i + batch_size, -1]))
            for i in range(0, len(mat), batch_size)]


def iter_batches(windows: np.ndarray, batch_size: int,
                 rng: np.random.Generator | None = None) -> Iterator[NGramBatch]:
    """Lazy variant of :func:`make_batches`; no shuffle when ``rng`` is None."""
    order = rng.permutation(len(windows)) if rng is not None else np.arange(len(windows))
    for i in range(0, len(order), batch_size):
        rows = windows[order[i:i + batch_size]]
        yield NGramBatch(rows[:, :-1], rows[:, -1])
