"""Plan-and-react agent engine for natural-language 3D scene editing."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    CodeSnippet,
    ConstraintSet,
    Directive,
    Domain,
    HardConstraint,
    LatencyLedger,
    Plan,
    SemanticFactorSet,
    UsageLedger,
    UserIntent,
    ValidationReport,
    canonical_domain_order,
    ledger_total,
)
