"""Exception types shared across the engine."""


class StochCLSError(Exception):
    """Base class for engine errors."""


class InvalidAddressError(StochCLSError, LookupError):
    """A compartment address does not resolve in the term."""


class UnknownInfoNameError(StochCLSError, KeyError):
    """An info update names a binding the loop does not carry."""


class UnboundVariableError(StochCLSError, KeyError):
    """Substitution met a variable missing from the instantiation."""


class StaleMatchError(StochCLSError):
    """A match was executed against a state it was not computed for."""


class StaleTableError(StochCLSError):
    """The propensity table disagrees with the state it claims to describe."""


class NonPositivePropensityError(StochCLSError, ValueError):
    """Sampling was requested with a total propensity that is not positive."""


class UnknownEventError(StochCLSError, ValueError):
    """An external event name or target is not understood by the handler."""


class InvalidSpecError(StochCLSError, ValueError):
    """Model parameters or container specifications are inconsistent."""


class ConfigError(StochCLSError, ValueError):
    """A run configuration or one of its input files is malformed."""
