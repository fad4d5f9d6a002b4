"""Exception hierarchy shared across the package.

Every error carries a short category tag so the CLI can map failures to
stable exit codes and prefix messages consistently.
"""


class SalienceError(Exception):
    """Base class for all package errors."""

    category = "internal"


class ConfigError(SalienceError):
    """Invalid configuration value or inconsistent option combination."""

    category = "config"


class DataError(SalienceError):
    """Malformed dataset, record, or label."""

    category = "data"


class TemplateError(SalienceError):
    """Bad hard-template pattern or missing registration."""

    category = "template"


class BackendError(SalienceError):
    """Model-backend failure (dimension mismatch, unusable state)."""

    category = "backend"


class RemoteProtocolError(BackendError):
    """Remote scoring endpoint spoke the wrong protocol or garbled data."""

    category = "remote"


class GradientsUnsupportedError(BackendError):
    """Backend cannot provide prompt gradients (inference-only)."""

    category = "backend"


class ScoringError(SalienceError):
    """Score computation failed (degenerate probabilities, bad inputs)."""

    category = "scoring"


class DegenerateInputError(ScoringError):
    """A score denominator collapsed to zero or changed sign."""

    category = "scoring"


class TrainingError(SalienceError):
    """Training loop failure (schema mismatch, non-finite loss)."""

    category = "training"


class EvalError(SalienceError):
    """Evaluation input invalid (length mismatch, empty sets)."""

    category = "eval"
