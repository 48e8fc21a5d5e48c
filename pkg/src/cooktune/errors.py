"""Typed errors raised across the toolkit.

Flat hierarchy: everything derives from CooktuneError so callers can
catch broadly, with one class per distinct failure the public API
contracts name.
"""

from __future__ import annotations


class CooktuneError(Exception):
    """Base class for all toolkit errors."""


# instruction dataset construction


class EmptyLabel(CooktuneError):
    """Raw class label is empty or whitespace."""


class InvalidId(CooktuneError):
    """Record id is empty or whitespace."""


class EmptyRecipe(CooktuneError):
    """Video record built with an empty recipe text."""


class EmptyField(CooktuneError):
    """Text record built with an empty question or answer."""


class GenerationExhausted(CooktuneError):
    """Attempt budget ran out before enough unique questions existed."""


class ClientError(CooktuneError):
    """Transport-level failure talking to a text-generation client."""


class ZeroBaseline(CooktuneError):
    """Dataset ratio requested against a non-positive baseline count."""


# annotation parsing / eval set construction


class FileUnreadable(CooktuneError):
    """Input file missing or unreadable."""


class MalformedDocument(CooktuneError):
    """Input document is not the expected JSON shape."""


class EmptyResult(CooktuneError):
    """No eval items could be built from the given availability."""


# low-rank adaptation


class RankTooLarge(CooktuneError):
    """Adapter rank exceeds min(d_in, d_out)."""


class ShapeMismatch(CooktuneError):
    """Operand shapes are inconsistent."""


class EmptyBatch(CooktuneError):
    """Loss/gradient computation invoked on an empty batch."""


class DivergedLoss(CooktuneError):
    """Training loss became non-finite."""


# inference backends


class BackendUnavailable(CooktuneError):
    """Backend endpoint cannot be reached."""


class MediaNotFound(CooktuneError):
    """Referenced media file does not exist."""


class GenerationFailed(CooktuneError):
    """Backend returned no usable text for a request."""


class OutputUnwritable(CooktuneError):
    """Output path cannot be created or written."""


class EmptyInput(CooktuneError):
    """Inference run invoked with no items."""


# judge evaluation


class JudgeUnreachable(CooktuneError):
    """Judge client kept failing after the retry budget."""


class UnparseableVerdict(CooktuneError):
    """Judge reply carried no usable score."""

    def __init__(self, message: str, raw: str = "") -> None:
        super().__init__(message)
        self.raw = raw


class EmptyPrediction(CooktuneError):
    """Judged prediction is empty or whitespace."""


class EmptyEvaluation(CooktuneError):
    """Aggregation invoked with no verdicts."""


# temporal probe


class NonPositiveDuration(CooktuneError):
    """Video duration must be positive."""


# configuration


class ConfigInvalid(CooktuneError):
    """Config file missing, malformed, or inconsistent."""
