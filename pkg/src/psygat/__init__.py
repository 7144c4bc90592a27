"""Persona-conditioned graph attention over psychological expression
units, with causal edge-ranking explanations of detected symptoms.
"""

__version__ = "0.1.0"

from .datagen import GenConfig, PersonaProfile, generate_corpus, generate_session
from .graph import SessionGraph, build_graph, peu_edge_attr
from .model import ModelConfig, ModelParams, forward
from .peu import CATEGORIES, PeuTensor, PeuVector, keyword_extract
from .train import Checkpoint, TrainConfig, fit, train_ensemble

__all__ = [
    "CATEGORIES",
    "Checkpoint",
    "GenConfig",
    "ModelConfig",
    "ModelParams",
    "PersonaProfile",
    "PeuTensor",
    "PeuVector",
    "SessionGraph",
    "TrainConfig",
    "build_graph",
    "fit",
    "forward",
    "generate_corpus",
    "generate_session",
    "keyword_extract",
    "peu_edge_attr",
    "train_ensemble",
]
