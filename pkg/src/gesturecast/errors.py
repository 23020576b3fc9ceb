"""Exception types shared across the toolkit."""

from __future__ import annotations


class GestureCastError(Exception):
    """Base class for all toolkit errors."""


class ValidationFailure(GestureCastError):
    """A gesture (or corpus entry) violates the data-model invariants.

    Carries the list of violation messages so callers can report them all.
    """

    def __init__(self, violations: list[str], context: str = ""):
        self.violations = list(violations)
        self.context = context
        prefix = f"{context}: " if context else ""
        super().__init__(prefix + "; ".join(self.violations))


class CorpusFormatError(GestureCastError):
    """A corpus file could not be parsed. Message names the file (and line)."""


class DegenerateInputError(GestureCastError):
    """Input has no usable extent (zero duration, zero length, zero energy)."""


class QualityError(GestureCastError):
    """Model reconstruction of a seed gesture fell below the acceptance SNR."""

    def __init__(self, snr_db: float, threshold_db: float, detail: str = ""):
        self.snr_db = snr_db
        self.threshold_db = threshold_db
        msg = (
            f"seed reconstruction quality {snr_db:.2f} dB is below the "
            f"{threshold_db:g} dB acceptance threshold; provide a new example"
        )
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class SegmentClippedError(GestureCastError):
    """A velocity segment lacks the half-peak crossings needed to seed a fit."""


class UnknownFeatureError(GestureCastError):
    """Requested feature id is not registered."""


class DegenerateFeatureError(GestureCastError):
    """Feature is undefined on this gesture (division by a vanishing quantity)."""


class InsufficientDataError(GestureCastError):
    """Not enough values to compute the requested statistic."""


class SandboxError(GestureCastError):
    """Base class for custom-feature sandbox failures."""


class SpecCompileError(SandboxError):
    """Custom feature source failed to parse. Carries a source location."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class PolicyViolationError(SandboxError):
    """Custom feature source uses a forbidden capability."""


class FeatureCollisionError(SandboxError):
    """Custom feature name collides with a built-in feature id."""


class SandboxTimeoutError(SandboxError):
    """Custom feature evaluation exceeded its time budget."""


class SandboxRuntimeError(SandboxError):
    """Custom feature raised while evaluating a gesture."""


class NonFiniteResultError(SandboxError):
    """Custom feature returned NaN, infinity, or a non-numeric value."""
