"""Embedding-space diffusion for generating contextual fact sets."""

from .corpus import FactTriple, KnowledgeSet, NarrativeSample, RelationCatalog, Vocabulary
from .numkernel import ModelConfig
from .schedule import NoiseSchedule, sqrt_schedule

__version__ = "0.1.0"

__all__ = ["FactTriple", "KnowledgeSet", "ModelConfig", "NarrativeSample", "NoiseSchedule", "RelationCatalog",
           "Vocabulary", "sqrt_schedule"]
