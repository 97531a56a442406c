"""Trainable multi-label entity typing with a label-relational graph layer."""

from .autodiff import Tape, Tensor
from .data import Sample, TypeVocabulary, WordVocabulary
from .labelgraph import PropagationConfig, TypeAdjacency, WordAffinity
from .model import Model, ModelConfig
from .trainer import TrainConfig

__all__ = [
    "Tape",
    "Tensor",
    "Sample",
    "TypeVocabulary",
    "WordVocabulary",
    "PropagationConfig",
    "TypeAdjacency",
    "WordAffinity",
    "Model",
    "ModelConfig",
    "TrainConfig",
]

__version__ = "0.1.0"
