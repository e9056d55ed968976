"""Exception hierarchy shared by the library and the command line tool."""


class IcvarError(Exception):
    """Base class for all errors raised by icvar_rl."""


class InvalidModelError(IcvarError, ValueError):
    """A model is structurally broken or violates probability constraints."""


class ConfigError(IcvarError, ValueError):
    """A configuration or argument lies outside its admissible domain."""


class BudgetExceededError(IcvarError, RuntimeError):
    """An exhaustive search would exceed its combinatorial budget."""
