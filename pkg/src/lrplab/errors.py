"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid experiment configuration; message names the offending field."""


class NumericValidityError(RuntimeError):
    """A run produced too many invalid samples (leak or boundary discards)."""


class InvariantViolation(RuntimeError):
    """A structural or consistency invariant failed at run time."""


class BoundaryContactError(RuntimeError):
    """An operation refused a sample whose window-truncation flag is set."""
