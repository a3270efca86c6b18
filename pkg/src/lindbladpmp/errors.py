"""Exception types shared across the package."""


class LindbladPMPError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(LindbladPMPError, ValueError):
    """Operands have incompatible or invalid dimensions."""


class NotPositiveSemidefiniteError(LindbladPMPError, ValueError):
    """A matrix required to be positive semidefinite has a negative
    eigenvalue beyond the clamping tolerance."""


class DegenerateSpectrumError(LindbladPMPError, ValueError):
    """Eigenvalues are too close for the polynomial square-root expansion;
    callers should fall back to the eigendecomposition square root."""


class PropagationError(LindbladPMPError, RuntimeError):
    """A propagated state violated its invariants.

    The offending grid index is stored in ``step``.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConstraintError(LindbladPMPError, ValueError):
    """The initial state is infeasible under the configured constraint mode."""


class ConfigError(LindbladPMPError, ValueError):
    """A run configuration is malformed or out of range.

    ``field`` names the offending entry (dotted path) when known.
    """

    def __init__(self, message, field=None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field
