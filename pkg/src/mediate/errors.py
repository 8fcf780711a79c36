class ConfigurationError(ValueError):
    """Raised when a run, environment, or protocol is configured inconsistently."""


class TrainingError(RuntimeError):
    """Raised when a learner update produces a non-finite loss or gradient."""
