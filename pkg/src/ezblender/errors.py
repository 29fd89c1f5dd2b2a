"""Exception taxonomy shared across the engine.

Exit-code mapping for the CLI lives in ``cli.py``; the classes here only
carry the failure semantics.
"""

from __future__ import annotations


class EzBlenderError(Exception):
    """Base class for all engine errors."""


class ConfigError(EzBlenderError):
    """Bad or missing configuration (CLI exit code 2)."""


class EpisodeParseError(ConfigError):
    """Episode/benchmark file failed to parse; carries file position."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" at line {line}" + (f", column {column}" if column is not None else "")
        super().__init__(message + where)


# --- gateway ---------------------------------------------------------------

class GatewayError(EzBlenderError):
    """Provider-side failure (CLI exit code 3)."""


class ProviderUnreachable(GatewayError):
    """The completion provider could not serve the request."""


class TranscriptExhausted(ProviderUnreachable):
    """Replay transcript ran out of scripted turns for a role."""


class BudgetExceeded(GatewayError):
    """Session token ceiling would be exceeded; the call was rejected."""


class UnknownModel(GatewayError):
    """Price table has no entry for the session model id."""


class SchemaViolation(GatewayError):
    """Model output failed structured-output validation (after retry, where one applies)."""


class EmptyIntent(EzBlenderError):
    """User intent text is empty after trimming."""


class EmptyFactorSet(EzBlenderError):
    """Planner produced no semantic factors to decompose."""


# --- execution backend -----------------------------------------------------

class ExecutorError(EzBlenderError):
    """Execution-backend failure (CLI exit code 4)."""


class ExecutorUnreachable(ExecutorError):
    """Transport to the execution backend was lost or refused."""


class ProtocolError(ExecutorError):
    """Malformed or version-mismatched wire traffic."""


class RenderFailed(ExecutorError):
    """The backend failed to produce a render; scored as a miss by the evaluator."""


class PortInUse(ExecutorError):
    """Requested listen port is already bound."""


# --- sub-agents / repair ---------------------------------------------------

class ConstraintUnsatisfiable(EzBlenderError):
    """The constraint-injection fallback could not express a hard constraint."""


class Unrepairable(EzBlenderError):
    """No repair strategy produced a changed snippet."""


# --- evaluator ---------------------------------------------------------------

class EvaluatorError(EzBlenderError):
    """Scoring-layer failure."""


class DimensionMismatch(EvaluatorError):
    """Embedding vectors of different dimensions were combined."""


class ZeroVector(EvaluatorError):
    """Cosine similarity of a zero-length vector is undefined."""


class EmbeddingProviderError(EvaluatorError):
    """The embedding provider failed to produce a vector."""


class EmptyTrialSet(EvaluatorError):
    """Task completion rate over zero sub-tasks is undefined."""
