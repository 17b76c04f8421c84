"""Exception hierarchy shared by all modules.

Each class carries the process exit status used by the command-line tool.
"""
from __future__ import annotations


class ArtifactError(Exception):
    exit_code = 3


class DomainError(ArtifactError, ValueError):
    """A parameter lies outside its admissible range."""

    exit_code = 2


class PoleError(DomainError):
    """A map was evaluated at its pole."""


class TagError(DomainError):
    """An object carries the wrong ensemble tag for the requested operation."""


class NumericalFailure(ArtifactError, ArithmeticError):
    """A numerical routine could not reach its stated tolerance."""

    exit_code = 3

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class HorizonError(NumericalFailure):
    """A truncated time horizon leaves a tail above tolerance."""


class ResolutionError(NumericalFailure):
    """A discretization is too coarse for a reliable answer."""


class RepresentationError(ArtifactError, TypeError):
    """The path representation does not support the requested operation."""

    exit_code = 2


class StatisticalFailure(ArtifactError):
    """A statistical acceptance check failed."""

    exit_code = 4


class QualityError(StatisticalFailure):
    """Too many replicates were undecided to trust an estimate."""
