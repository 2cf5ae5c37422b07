"""Exception types shared across the package."""

from __future__ import annotations


class GossipGradError(Exception):
    """Base class for all package errors."""


class ParameterError(GossipGradError, ValueError):
    """An argument violates a documented constraint."""


class ShapeError(GossipGradError, ValueError):
    """Array dimensions are inconsistent with the operation."""


class ZeroSpectralGapError(GossipGradError):
    """The mixing matrix is disconnected or periodic (|lambda_2| ~ 1)."""


class DegenerateProblemError(GossipGradError):
    """The least-squares normal matrix is numerically singular."""


class DivergenceError(GossipGradError):
    """An iterate left the finite range during simulation.

    Attributes:
        round: 1-based round index at which divergence was detected.
    """

    def __init__(self, round: int, message: str | None = None):
        self.round = round
        super().__init__(message or f"iterates diverged at round {round}")


class NoStableLearningRateError(GossipGradError):
    """Every grid point diverged during a learning-rate search."""


class ConfigError(GossipGradError, ValueError):
    """A config document is malformed; carries the offending field path."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
