"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: configuration errors exit with 2,
numerical failures with 3, and I/O or file-format failures with 4.
"""


class AcparaError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(AcparaError):
    """Invalid parameters, inconsistent configuration, or bad user input."""


class StructuralError(AcparaError):
    """Shape or metadata mismatch between tensors, grids, or checkpoints."""


class FormatError(AcparaError):
    """Malformed binary snapshot or checkpoint file."""


class NonConvergenceError(AcparaError):
    """An iterative solve failed to reach its tolerance.

    Carries the last observed increment so callers can report how far the
    iteration got before giving up.
    """

    def __init__(self, message: str, last_increment: float | None = None):
        super().__init__(message)
        self.last_increment = last_increment


class DivergenceError(AcparaError):
    """Training loss became non-finite or exceeded the divergence guard.

    ``checkpoint_path`` points at the last checkpoint written before the
    failing update, when one exists.
    """

    def __init__(self, message: str, checkpoint_path: str | None = None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
