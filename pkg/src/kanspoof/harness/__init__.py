"""Desk-scale experiment driver: data, features, training, checkpoints, CLI."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .corpus import Corpus, CorpusSpec, generate_corpus, load_corpus, pad_or_trim, save_corpus
from .evaluation import evaluate
from .features import extract_features
from .training import TrainConfig, TrainResult, score_trials, train

__all__ = [
    "Checkpoint",
    "Corpus",
    "CorpusSpec",
    "TrainConfig",
    "TrainResult",
    "evaluate",
    "extract_features",
    "generate_corpus",
    "load_checkpoint",
    "load_corpus",
    "pad_or_trim",
    "save_checkpoint",
    "save_corpus",
    "score_trials",
    "train",
]
