"""Exception hierarchy shared across the engine.

Every error carries a stable ``code`` string (its class name) so the HTTP
layer can emit problem JSON and the CLI can map errors to exit codes
without string matching.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all planmix errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- plan parsing / validation -----------------------------------------

class ParseError(EngineError):
    """Planner output did not contain a well-formed plan envelope."""


# --- planner backends ---------------------------------------------------

class BackendError(EngineError):
    """The LLM backend failed (network/HTTP failure after retries)."""


class NoResponse(EngineError):
    """Scripted backend has no response registered for this request."""


class PlanRejected(EngineError):
    """Planner output stayed invalid after the corrective retry."""

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = violations or []


# --- synthesis agents ---------------------------------------------------

class AgentError(EngineError):
    """A generation backend failed or violated its output contract."""


# --- mixing / loudness --------------------------------------------------

class TooShort(EngineError):
    """Signal shorter than the minimum analysis window."""


class Unmeasurable(EngineError):
    """Loudness gain requested on a silent (unmeasurable) signal."""


class LengthMismatch(EngineError):
    """Clip length does not match its plan step duration."""


class ConfigError(EngineError):
    """Invalid mixer or engine configuration."""


# --- token codec ---------------------------------------------------------

class DimensionMismatch(EngineError):
    """Feature dimension does not match the codebook dimension."""


class IndexOutOfRange(EngineError):
    """Token index outside the codebook range."""


class MalformedToken(EngineError):
    """Token text does not match the expected token grammar."""


class ShapeMismatch(EngineError):
    """Array arguments have non-conformable shapes."""


class EmptyInput(EngineError):
    """Operation requires a non-empty input."""


class InsufficientData(EngineError):
    """Not enough samples to fit the requested codebook."""


# --- metrics --------------------------------------------------------------

class ZeroVector(EngineError):
    """Cosine similarity requested on a zero vector."""


# --- persistence / service ------------------------------------------------

class StoreError(EngineError):
    """Session store failure (duplicate id, unwritable root, corrupt data)."""


class NotFound(EngineError):
    """Session or turn does not exist."""


class NotRendered(EngineError):
    """Turn exists but has no rendered audio (rejected or failed)."""


class FormatError(EngineError):
    """Binary container or WAV payload is malformed."""
