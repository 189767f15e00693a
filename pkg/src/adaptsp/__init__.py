"""Deterministic toolkit for analyzing prompt-embedding drift caused by
personalization tokens and for producing adjusted prompt embeddings.

The pipeline: extract per-prompt residual vectors (personalized minus class
prompt embeddings), fit a low-rank principal subspace of those residuals,
inspect cumulative explained variance, and write adjusted embeddings via
mean-residual addition, subspace projection, or spherical interpolation.

Every numerical path is bitwise deterministic: identical input bytes yield
identical output bytes, independent of BLAS builds or thread counts.
"""

from adaptsp.errors import (
    DegenerateError,
    InternalError,
    ToolkitError,
    UndefinedCosineError,
    ValidationError,
)
from adaptsp.store import EmbeddingSet, Manifest, ManifestEntry, ResidualSet

__all__ = [
    "ToolkitError",
    "ValidationError",
    "DegenerateError",
    "InternalError",
    "UndefinedCosineError",
    "EmbeddingSet",
    "Manifest",
    "ManifestEntry",
    "ResidualSet",
]

__version__ = "0.1.0"
