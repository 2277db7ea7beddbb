"""Exception hierarchy shared across the package."""


class BlockMoeError(Exception):
    """Base class for all package-specific errors."""


class InvalidPartitionError(BlockMoeError, ValueError):
    """Raised when index groups do not form a partition of the coordinates."""


class ShapeError(BlockMoeError, ValueError):
    """Raised on inconsistent array shapes."""


class DecompositionError(BlockMoeError, ValueError):
    """Raised when a matrix expected to be symmetric positive definite is not."""


class UnsupportedDegreeError(BlockMoeError, ValueError):
    """Raised when an operation requires affine experts (degree 1)."""


class BoundsViolationError(BlockMoeError, ValueError):
    """Raised when constructed parameters violate their declared bounds."""


class InsufficientDataError(BlockMoeError, ValueError):
    """Raised when a dataset is too small for the requested operation."""


class ComponentCollapseError(BlockMoeError):
    """Raised inside EM when a mixture component loses all its weight."""


class FitFailureError(BlockMoeError):
    """Raised when every EM start collapsed; carries per-start diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class PreconditionError(BlockMoeError, ValueError):
    """Raised when a stated hypothesis of a closed-form bound fails."""


class ScenarioError(BlockMoeError, ValueError):
    """Raised when a synthetic scenario is misconfigured (e.g. rejection
    sampling almost never accepts)."""


class CsvFormatError(BlockMoeError, ValueError):
    """Malformed tabular input; carries 1-based line/column positions."""

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column
