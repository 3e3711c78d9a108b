"""
training/__init__.py

Public API for training runs and checkpoints.
"""

from .checkpoint import Checkpoint, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .config import TrainingConfig, load_training_config
from .corpus import Corpus, CorpusSpec, PoolSpec, toy_clips
from .trainer import Trainer, corpus_for, models_from_checkpoint, train

__all__ = [
    "Checkpoint",
    "decode_checkpoint",
    "encode_checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "TrainingConfig",
    "load_training_config",
    "Corpus",
    "CorpusSpec",
    "PoolSpec",
    "toy_clips",
    "Trainer",
    "corpus_for",
    "models_from_checkpoint",
    "train",
]
