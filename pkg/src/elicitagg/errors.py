"""Exception types shared across the package."""


class DomainError(ValueError):
    """An outcome or hyperparameter lies outside the family's domain."""


class PreconditionError(ValueError):
    """A quantity is requested where its closed form is undefined."""


class InversionDomainError(ValueError):
    """A report is not the truthful report of any admissible hyperparameter."""


class AggregationError(ValueError):
    """A decoded hyperparameter is not reachable from the shared prior."""


class ConfigError(ValueError):
    """A scenario configuration failed to parse or validate."""
