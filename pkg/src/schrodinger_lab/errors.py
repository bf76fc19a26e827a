"""Exception hierarchy shared by the lab modules."""


class LabError(Exception):
    """Base class for all lab errors."""


class InvalidGridError(LabError):
    """Grid parameters violate a structural invariant or two grids disagree."""


class DomainError(LabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class RangeError(LabError):
    """A requested scale does not fit on the configured grid."""


class ContractError(LabError):
    """A precondition on the input data does not hold."""


class DegeneracyError(LabError):
    """A geometric object is degenerate where a non-degenerate one is required."""
