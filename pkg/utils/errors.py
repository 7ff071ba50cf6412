"""Exception hierarchy shared by every GReg module.

Each exception carries the CLI exit code it maps to, so ``app.run`` can
translate failures without knowing which module raised them.
"""


class GRegError(Exception):
    """Base class for all registration-engine errors."""

    exit_code = 3


class UsageError(GRegError):
    """Bad command-line usage."""

    exit_code = 1


class ConfigError(GRegError, ValueError):
    """Unknown configuration key or out-of-domain value, including bad arguments to library calls."""

    exit_code = 1


class FieldFormatError(GRegError):
    """Malformed field file, sidecar or image."""

    exit_code = 2


class GridError(GRegError):
    """Degenerate grid or fields living on different grids."""


class InterfaceError(GRegError):
    """Interface construction or one-sided extension failed."""


class NumericalError(GRegError):
    """CFL violation, folding step, non-convergent inversion or undefined metric."""


class SolverError(GRegError):
    """Linear solver did not reach its tolerance."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class CompositionError(GRegError):
    """Arrows whose source and target interfaces do not match."""


CHECK_FAILURE_EXIT_CODE = 4
