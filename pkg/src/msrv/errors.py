"""Exception and warning types raised across the package."""


class MSRVError(Exception):
    """Base class for all package errors."""


class InputError(MSRVError, ValueError):
    """Malformed or insufficient data (too few observations, bad CSV rows)."""


class ParameterError(MSRVError, ValueError):
    """A tuning parameter is outside its admissible range."""


class DomainError(ParameterError):
    """An evaluation point lies outside the function's domain."""


class ContractError(MSRVError, ValueError):
    """A structural precondition (monotonicity, weight conditions) is violated."""


class SingularityError(ContractError):
    """A closed form is undefined, e.g. identical scales give Var(K) = 0."""


class NumericError(MSRVError, ArithmeticError):
    """Non-finite values met during a numerical routine."""


class ConfigError(MSRVError, ValueError):
    """Invalid or unknown keys in a simulation/experiment configuration."""


class MSRVWarning(UserWarning):
    """Soft diagnostics: irregular grids, clamped plug-ins, small replication counts."""
