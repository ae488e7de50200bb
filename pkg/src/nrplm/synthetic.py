"""Deterministic synthetic corpora with word-class structure.

Words belong to latent classes; the class sequence follows a sparse
second-order Markov chain and each class emits its words with Zipfian
weights. Context words therefore carry real predictive information, and a
large vocabulary shares it through a small number of classes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _cumulative(p: np.ndarray) -> np.ndarray:
    c = np.cumsum(p, axis=-1)
    c[..., -1] = 1.0
    return c


def generate_tokens(n_tokens: int, n_types: int = 2500, n_classes: int = 16,
                    concentration: float = 0.05, zipf: float = 1.1,
                    seed: int = 0) -> list[list[str]]:
    """Sentences (lists of tokens) totalling at least ``n_tokens`` tokens."""
    rng = np.random.default_rng(seed)
    word_class = rng.integers(0, n_classes, size=n_types)
    emit = []
    for c in range(n_classes):
        members = np.flatnonzero(word_class == c)
        if members.size == 0:
            members = np.array([rng.integers(n_types)])
        w = 1.0 / np.arange(1, members.size + 1) ** zipf
        emit.append((members[rng.permutation(members.size)], _cumulative(w / w.sum())))
    trans = rng.dirichlet(np.full(n_classes, concentration), size=(n_classes, n_classes))
    trans_c = _cumulative(trans)
    start = _cumulative(rng.dirichlet(np.ones(n_classes)))

    sentences, total = [], 0
    while total < n_tokens:
        length = int(rng.integers(8, 25))
        u = rng.random(2 * length + 2)
        c1 = c2 = int(np.searchsorted(start, u[0]))
        words = []
        for i in range(length):
            c = int(np.searchsorted(trans_c[c1, c2], u[2 * i + 1]))
            members, cum = emit[c]
            words.append(f"w{members[int(np.searchsorted(cum, u[2 * i + 2]))]}")
            c1, c2 = c2, c
        sentences.append(words)
        total += length
    return sentences


def write_corpus(out_dir: str | Path, train_tokens: int = 50_000, valid_tokens: int = 5_000,
                 test_tokens: int = 5_000, seed: int = 0, **kwargs) -> dict[str, Path]:
    """Write ``train.txt``, ``valid.txt`` and ``test.txt`` drawn from one process."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sents = generate_tokens(train_tokens + valid_tokens + test_tokens, seed=seed, **kwargs)
    paths, i = {}, 0
    for split, budget in (("train", train_tokens), ("valid", valid_tokens), ("test", test_tokens)):
        lines, count = [], 0
        while i < len(sents) and (count < budget or split == "test"):
            lines.append(" ".join(sents[i]))
            count += len(sents[i])
            i += 1
        paths[split] = out / f"{split}.txt"
        paths[split].write_text("\n".join(lines) + "\n")
    return paths
