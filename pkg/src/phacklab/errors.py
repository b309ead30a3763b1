"""Exception hierarchy shared across the package."""


class PhacklabError(Exception):
    """Base class for all package-specific errors."""


class DomainError(PhacklabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class BeliefSaturationError(PhacklabError):
    """A belief update left the representable open interval (0, 1)."""


class ModelValidationError(PhacklabError, ValueError):
    """A success model / arrival probability combination is inconsistent."""


class PayoffOverflowError(PhacklabError, OverflowError):
    """A payoff value exceeds the floating-point range."""


class BracketError(PhacklabError):
    """The feasible bracket for the project search could not be closed."""


class PolicyClassError(PhacklabError):
    """A diagnostic that requires a diverging policy was run on a constricted one."""


class DiagnosticsError(PhacklabError):
    """A diagnostic could not be computed from the given trajectories."""


class ConfigError(PhacklabError, ValueError):
    """A scenario configuration file is malformed or inconsistent."""
