"""Energy-based feedforward n-gram language models with 1-of-V or sparse random-projection inputs."""

from .corpus import NGramBatch, NGramWindow, Vocabulary, build_vocabulary, make_batches, sliding_windows
from .evaluation import EvalReport, SweepSpec, perplexity, run_sweep
from .model_baseline import BaselineLM
from .model_nrp import NRPLM, compose_features
from .random_index import RandomIndex, RandomIndexLookup, generate_random_index, inner_product
from .trainer import TrainConfig, TrainState, end_of_epoch, train, train_epoch

__version__ = "0.1.0"

__all__ = [
    "BaselineLM", "EvalReport", "NGramBatch", "NGramWindow", "NRPLM", "RandomIndex",
    "RandomIndexLookup", "SweepSpec", "TrainConfig", "TrainState", "Vocabulary",
    "build_vocabulary", "compose_features", "end_of_epoch", "generate_random_index",
    "inner_product", "make_batches", "perplexity", "run_sweep", "sliding_windows", "train",
    "train_epoch",
]
