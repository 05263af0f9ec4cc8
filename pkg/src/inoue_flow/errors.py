"""Exception hierarchy shared by every module of the package."""


class InoueError(Exception):
    """Base class for all errors raised by ``inoue_flow``."""

    exit_code = 2


class NotUnimodular(InoueError):
    """The integer matrix does not have determinant one."""


class NoInoueSpectrum(InoueError):
    """A 3x3 matrix lacks a real eigenvalue above one paired with complex ones."""


class DegenerateEigenvector(InoueError):
    """No usable ratio of eigenvector entries exists."""


class NoHyperbolicSpectrum(InoueError):
    """A 2x2 matrix has no real eigenvalue above one."""


class RationalInput(InoueError):
    """A quantity that must be irrational looks rational at working precision."""


class KernelMismatch(InoueError):
    """The matrix Z fails to annihilate the real eigenvector."""


class InvalidR(InoueError):
    """The integer r of the S+ construction is zero."""


class ShapeMismatch(InoueError):
    """Array shapes do not match the grid they are supposed to live on."""


class NotPositive(InoueError):
    """A Hermitian form fails positivity at some grid node."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class NonZeroMean(InoueError):
    """A right-hand side has non-vanishing fiber mean."""


class DivisorUnderflow(InoueError):
    """A Fourier divisor is numerically zero."""


class SeamMismatch(InoueError):
    """A solution does not glue across the mapping-torus seam."""


class WindowTooSmall(InoueError):
    """The quadrature window cannot reach the requested tolerance."""


class DegenerateLattice(InoueError):
    """The fiber lattice has (numerically) vanishing covolume."""


class ObstructionViolated(InoueError):
    """The metric fails the necessary condition for a leafwise flat solution."""

    exit_code = 4

    def __init__(self, message, pairing=None):
        super().__init__(message)
        self.pairing = pairing


class FlowError(InoueError):
    """Base class for failures raised while integrating the flow."""

    exit_code = 3


class PositivityLost(FlowError):
    """The evolving metric stopped being positive definite."""

    def __init__(self, message, time=None, location=None):
        super().__init__(message)
        self.time = time
        self.location = location


class StepTooLarge(FlowError):
    """The requested time step is outside the stable range of the integrator."""


class ConfigError(InoueError):
    """A run configuration is malformed or violates its invariants."""
