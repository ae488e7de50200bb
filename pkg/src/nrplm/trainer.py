"""SGD training with per-epoch learning-rate halving and patience-based early stopping."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from . import numerics as nx
from .corpus import NGramBatch, make_batches
from .energy import EnergyLM
from .errors import NumericError, ParameterError

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "lr", "train_loss", "val_ppl", "val_corpus_ppl", "patience_left")


class TrainingAborted(NumericError):
    def __init__(self, message: str, batch_index: int, lr: float):
        super().__init__(f"{message} (batch {batch_index}, lr {lr!r})")
        self.batch_index = batch_index
        self.lr = lr


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 0.5
    lr_decay: float = 0.5
    clip_threshold: float = 1.0
    patience: int = 3
    batch_size: int = 128
    dropout_p: float = 0.05
    max_epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.initial_lr <= 0:
            raise ParameterError("initial_lr must be > 0")
        if not 0 < self.lr_decay < 1:
            raise ParameterError("lr_decay must be in (0, 1)")
        if self.clip_threshold <= 0:
            raise ParameterError("clip_threshold must be > 0")
        if self.patience < 1:
            raise ParameterError("patience must be >= 1")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if not 0 <= self.dropout_p < 1:
            raise ParameterError("dropout_p must be in [0, 1)")
        if self.max_epochs < 1:
            raise ParameterError("max_epochs must be >= 1")


@dataclass(frozen=True)
class TrainState:
    epoch: int
    lr: float
    best_val_ppl: float
    patience_left: int
    converged: bool = False
    best_epoch: int = 0

    @classmethod
    def initial(cls, config: TrainConfig) -> "TrainState":
        return cls(epoch=0, lr=config.initial_lr, best_val_ppl=math.inf,
                   patience_left=config.patience)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_ppl: float
    val_corpus_ppl: float
    patience_left: int

    def to_line(self) -> str:
        # repr keeps floats exact for bit-level replay comparisons
        return ",".join([str(self.epoch), repr(self.lr), repr(self.train_loss),
                         repr(self.val_ppl), repr(self.val_corpus_ppl), str(self.patience_left)])


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for init, shuffle, dropout and random indices."""
    init, shuffle, drop, index = np.random.SeedSequence(seed).spawn(4)
    return {"init": np.random.default_rng(init),
            "shuffle": np.random.default_rng(shuffle),
            "dropout": np.random.default_rng(drop),
            "index_seed": int(index.generate_state(1, np.uint32)[0])}


def train_epoch(model: EnergyLM, batches: Iterable[NGramBatch], state: TrainState,
                config: TrainConfig, rng: np.random.Generator) -> float:
    """One pass over ``batches`` at the fixed rate ``state.lr``; returns the mean batch loss."""
    if state.converged:
        raise ParameterError("training state has already converged")
    total, count = 0.0, 0
    for i, batch in enumerate(batches):
        try:
            loss, grads = model.loss_and_backward(batch.contexts, batch.targets,
                                                  config.dropout_p, rng, training=True)
        except NumericError as exc:
            raise TrainingAborted(str(exc), i, state.lr) from exc
        if not math.isfinite(loss):
            raise TrainingAborted("non-finite loss", i, state.lr)
        grads = nx.clip_all(grads, config.clip_threshold)
        nx.sgd_step(model.params, grads, state.lr)
        total += loss
        count += 1
    if count == 0:
        raise ParameterError("no training batches")
    return total / count


def end_of_epoch(state: TrainState, val_ppl: float, config: TrainConfig,
                 on_improve: Callable[[TrainState], None] | None = None) -> TrainState:
    """Apply the step-wise annealing rule after an epoch.

    A strictly lower validation perplexity becomes the new best, resets the
    patience and triggers ``on_improve`` (checkpointing). Anything else
    halves the rate and spends one unit of patience; training has converged
    once patience is exhausted.
    """
    if not val_ppl > 0:
        raise ParameterError(f"validation perplexity must be > 0, got {val_ppl}")
    epoch = state.epoch + 1
    if val_ppl < state.best_val_ppl:
        new = replace(state, epoch=epoch, best_val_ppl=val_ppl, patience_left=config.patience,
                      best_epoch=epoch, converged=False)
        if on_improve is not None:
            on_improve(new)
        return new
    left = state.patience_left - 1
    return replace(state, epoch=epoch, lr=state.lr * config.lr_decay, patience_left=left,
                   converged=left == 0)


@dataclass
class TrainResult:
    state: TrainState
    history: list[EpochRecord]
    best_params: dict[str, np.ndarray] = field(repr=False)

    @property
    def log_lines(self) -> list[str]:
        return [",".join(LOG_COLUMNS)] + [r.to_line() for r in self.history]


def train(model: EnergyLM, train_windows: np.ndarray, valid_windows: np.ndarray,
          config: TrainConfig, streams: dict | None = None,
          on_improve: Callable[[EnergyLM, TrainState], None] | None = None,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Train to convergence (or ``max_epochs``); the model ends holding the best parameters."""
    from .evaluation import perplexity

    streams = streams if streams is not None else seed_streams(config.seed)
    state = TrainState.initial(config)
    history: list[EpochRecord] = []
    best = model.copy_params()
    valid_batches = make_batches(valid_windows, config.batch_size, shuffle=False)

    def improved(new_state):
        nonlocal best
        best = model.copy_params()
        if on_improve is not None:
            on_improve(model, new_state)

    while not state.converged and state.epoch < config.max_epochs:
        batches = make_batches(train_windows, config.batch_size, seed=streams["shuffle"])
        train_loss = train_epoch(model, batches, state, config, streams["dropout"])
        report = perplexity(model, valid_batches)
        record = EpochRecord(state.epoch + 1, state.lr, train_loss, report.mean_batch_ppl,
                             report.corpus_ppl, 0)
        state = end_of_epoch(state, report.mean_batch_ppl, config, improved)
        record = replace(record, patience_left=state.patience_left)
        history.append(record)
        log.info("epoch %d lr %.4g train_loss %.4f val_ppl %.3f patience %d",
                 record.epoch, record.lr, train_loss, record.val_ppl, state.patience_left)
        if on_epoch is not None:
            on_epoch(record)
    for name, arr in best.items():
        model.params[name][...] = arr
    return TrainResult(state, history, best)
