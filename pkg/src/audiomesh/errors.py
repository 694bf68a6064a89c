"""Exception hierarchy shared across the package.

DataError covers anything wrong with user-supplied files or values
(CLI exit code 2); NumericalError covers solver and floating-point
failures (CLI exit code 3).
"""


class DataError(Exception):
    """Invalid input data: bad files, bad shapes, violated invariants."""


class MeshError(DataError):
    """Mesh invariant violation (bad index, degenerate face, non-finite)."""


class FormatError(DataError):
    """Malformed or truncated file: parse failures, bad magic, bad version."""


class MaskError(DataError):
    """Invalid vertex mask (empty, out of range, duplicates)."""


class NumericalError(Exception):
    """Numerical failure during computation."""


class SolverError(NumericalError):
    """Eigensolver failed to converge or produced invalid output."""


class NonFiniteError(NumericalError):
    """NaN or infinity appeared where a finite value is required."""
