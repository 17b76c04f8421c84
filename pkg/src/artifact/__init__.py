"""Circular Jacobi and real orthogonal beta-ensembles, their Dirac operators and limits."""
from __future__ import annotations

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ArtifactError,
    DomainError,
    HorizonError,
    NumericalFailure,
    PoleError,
    QualityError,
    RepresentationError,
    ResolutionError,
    StatisticalFailure,
    TagError,
)
from .distributions import DeltaParam, RngStream  # noqa: F401
