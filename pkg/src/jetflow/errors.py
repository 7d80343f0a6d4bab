"""Exception hierarchy shared by all modules."""


class JetflowError(Exception):
    """Base class for every error raised by the package."""


class AliasingError(JetflowError, ValueError):
    """A requested operation would exceed the resolvable band of a grid."""


class SupportError(JetflowError, ValueError):
    """Building-block supports overlap or leave the unit cell."""


class BallViolationError(JetflowError, ValueError):
    """A matrix fed to the geometric decomposition left its admissible ball."""


class IdentityCheckError(JetflowError, RuntimeError):
    """A numerically verified identity exceeded its tolerance.

    Attributes:
        component: Name of the failing check.
        residual: The measured residual.
        tolerance: The tolerance that was exceeded.
    """

    def __init__(self, component: str, residual: float, tolerance: float):
        super().__init__(
            f"identity check '{component}' failed: residual {residual:.3e} > {tolerance:.1e}"
        )
        self.component = component
        self.residual = residual
        self.tolerance = tolerance


class ConfigError(JetflowError, ValueError):
    """Invalid run configuration or command-line usage."""
