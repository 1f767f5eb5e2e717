"""Exception hierarchy.

Errors fall in two families so the CLI can map them to exit codes:
``ValidationError`` (bad input, exit 2) and ``EstimationError`` (numerical
failure, exit 3).
"""


class PanelFXError(Exception):
    """Base class for all package errors."""


class ValidationError(PanelFXError):
    pass


class EstimationError(PanelFXError):
    pass


class MissingColumn(ValidationError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"missing column: {name!r}")


class ParseError(ValidationError):
    def __init__(self, row, column, value=None):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"cannot parse {value!r} in column {column!r} at data row {row}")


class EmptyFile(ValidationError):
    pass


class AllRowsDropped(ValidationError):
    pass


class UnknownVariable(ValidationError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown variable: {name!r}")


class NonFinite(ValidationError):
    def __init__(self, value):
        self.value = value
        super().__init__(f"non-finite value: {value!r}")


class InvalidConfig(ValidationError):
    pass


class EventOutOfRange(ValidationError):
    pass


class InsufficientSupport(EstimationError):
    def __init__(self, cell, support, minimum):
        self.cell = cell
        self.support = support
        self.minimum = minimum
        super().__init__(f"cell {cell} has support {support} < {minimum}")


class NoConvergence(EstimationError):
    def __init__(self, max_iter, achieved):
        self.max_iter = max_iter
        self.achieved = achieved
        super().__init__(
            f"demeaning did not converge in {max_iter} sweeps "
            f"(max within-group mean {achieved:.3e})"
        )


class EmptyDesign(EstimationError):
    pass


class ZeroRows(EstimationError):
    pass


class SingleCluster(EstimationError):
    def __init__(self, dim):
        self.dim = dim
        super().__init__(f"cluster dimension {dim!r} has a single cluster")


class DimensionMismatch(EstimationError):
    pass


class MissingTerm(EstimationError):
    def __init__(self, term):
        self.term = term
        super().__init__(f"expected term {term!r} absent from fit")


class TooFewClusters(EstimationError):
    pass


class InsufficientReplicates(EstimationError):
    pass


class CollinearEvent(EstimationError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"event indicator {name!r} is absorbed by the fixed effects")


class ZeroSd(EstimationError):
    pass
