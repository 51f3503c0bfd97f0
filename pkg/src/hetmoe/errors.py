"""Exception types shared across the package."""


class HetMoeError(Exception):
    """Base class for all library errors."""


class DimensionError(HetMoeError):
    """Tensor shapes do not satisfy an operation's contract."""


class ParameterError(HetMoeError):
    """An argument value is outside its legal range."""


class DataError(HetMoeError):
    """Input data violates an invariant (bad token id, empty dataset, ...)."""


class ContractError(HetMoeError):
    """A caller-side contract was violated (non-scalar loss, bad simplex row)."""


class NumericError(HetMoeError):
    """A non-finite value appeared where finite numbers are required."""


class ModeError(HetMoeError):
    """Classification/regression mode mismatch."""


class ParseError(HetMoeError):
    """A serialized record could not be decoded."""


class UsageError(HetMoeError):
    """Bad command-line usage (maps to exit code 2)."""
