"""Glue between configuration, data, models and the trainer."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import ExperimentConfig
from .corpus import Vocabulary, build_vocabulary, read_tokens, window_matrix
from .energy import EnergyLM
from .evaluation import EvalReport, perplexity
from .model_baseline import BaselineLM
from .model_nrp import NRPLM
from .trainer import TrainResult, seed_streams, train

log = logging.getLogger(__name__)


@dataclass
class Dataset:
    vocab: Vocabulary
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray

    def windows(self, split: str, n: int, pad_start: bool = False) -> np.ndarray:
        return window_matrix(getattr(self, split), n, pad_start=pad_start, pad_id=self.vocab.unk_id)


def load_dataset(cfg: ExperimentConfig, vocab: Vocabulary | None = None) -> Dataset:
    eos = cfg.eos_token or None
    splits = {}
    for split in ("train", "valid", "test"):
        path = getattr(cfg, f"{split}_path")
        if not path:
            raise FileNotFoundError(f"{split}_path is not set")
        splits[split] = read_tokens(path, eos=eos)
    if vocab is None:
        if cfg.vocab_cache and Path(cfg.vocab_cache).exists():
            vocab = Vocabulary.load(cfg.vocab_cache)
        else:
            vocab = build_vocabulary(splits["train"], cfg.vocab_size)
    return Dataset(vocab, *(vocab.encode_all(splits[s]) for s in ("train", "valid", "test")))


def build_model(cfg: ExperimentConfig, vocab_size: int, streams: dict) -> EnergyLM:
    dtype = np.dtype(cfg.dtype)
    if cfg.model == "baseline":
        return BaselineLM.create(vocab_size, cfg.m, cfg.h, cfg.n, streams["init"],
                                 cfg.activation, dtype, cfg.dropout_output, cfg.init_range)
    return NRPLM.create(vocab_size, cfg.k, cfg.s, cfg.m, cfg.h, cfg.n, streams["init"],
                        index_seed=streams["index_seed"], mode=cfg.mode,
                        activation=cfg.activation, dtype=dtype,
                        dropout_output=cfg.dropout_output, init_range=cfg.init_range)


def snapshot(cfg: ExperimentConfig) -> dict:
    nrp = cfg.model == "nrp"
    return {"model": cfg.model, "k": cfg.k if nrp else None, "s": cfg.s if nrp else None,
            "mode": cfg.mode if nrp else None, "m": cfg.m, "h": cfg.h, "n": cfg.n,
            "dropout": cfg.dropout, "seed": cfg.seed}


@dataclass
class RunResult:
    config: ExperimentConfig
    train: TrainResult
    test: EvalReport
    model: EnergyLM

    @property
    def best_epoch(self) -> int:
        return self.train.state.best_epoch


def run_experiment(cfg: ExperimentConfig, data: Dataset, checkpoint_path: str | Path | None = None,
                   log_path: str | Path | None = None) -> RunResult:
    """Train one configuration to convergence and evaluate its best checkpoint on test."""
    streams = seed_streams(cfg.seed)
    model = build_model(cfg, len(data.vocab), streams)
    train_w = data.windows("train", cfg.n, cfg.pad_start)
    valid_w = data.windows("valid", cfg.n, cfg.pad_start)
    test_w = data.windows("test", cfg.n, cfg.pad_start)

    log_fh = open(log_path, "w") if log_path else None
    try:
        if log_fh:
            log_fh.write(",".join(("epoch", "lr", "train_loss", "val_ppl", "val_corpus_ppl",
                                   "patience_left")) + "\n")

        def on_epoch(rec):
            if log_fh:
                log_fh.write(rec.to_line() + "\n")
                log_fh.flush()

        def on_improve(m, state):
            if checkpoint_path:
                checkpoint.save(m, checkpoint_path)

        result = train(model, train_w, valid_w, cfg.train_config(), streams,
                       on_improve=on_improve, on_epoch=on_epoch)
    finally:
        if log_fh:
            log_fh.close()
    test = perplexity(model, test_w, batch_size=cfg.batch_size, config=snapshot(cfg))
    return RunResult(cfg, result, test, model)
