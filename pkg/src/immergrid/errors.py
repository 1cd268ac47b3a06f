"""Exception types raised across the package."""


class ImmergridError(Exception):
    """Base class for all package errors."""


class SignError(ImmergridError):
    """Segment endpoints do not bracket a level-set root."""


class InactiveTarget(ImmergridError):
    """Refinement requested for an element that is not active."""


class OddResolution(ImmergridError):
    """Coarsening requires an even base resolution along every axis."""


class EmptyDomain(ImmergridError):
    """No element of the mesh intersects the physical domain."""


class UnsupportedFamilyOnHierarchy(ImmergridError):
    """Lagrange and uniform B-spline spaces need a mesh without local refinement."""


class MeshMismatch(ImmergridError):
    """Coarse space is not built on the coarsening of the fine mesh."""


class SingularSetup(ImmergridError):
    """Problem definition leaves the operator singular (no Dirichlet piece)."""


class EmptyBlockAfterFilter(ImmergridError):
    """All DOFs of a Schwarz block were removed by near-singular filtering."""


class ResolutionError(ImmergridError):
    """Mesh cannot be coarsened the requested number of times."""


class Breakdown(ImmergridError):
    """Conjugate gradients met a non-positive curvature direction."""


class NotConverged(ImmergridError):
    """Iteration limit reached before the tolerance was met.

    The partial result is kept on the exception as ``x`` and ``report``.
    """

    def __init__(self, message, x=None, report=None):
        super().__init__(message)
        self.x = x
        self.report = report


class Diverged(ImmergridError):
    """Residual grew for too many consecutive iterations."""

    def __init__(self, message, x=None, report=None):
        super().__init__(message)
        self.x = x
        self.report = report


class TooLarge(ImmergridError):
    """Operator exceeds the dense-spectrum size limit."""


class NoConvergence(ImmergridError):
    """Power iteration Rayleigh quotient did not settle."""


class ConfigError(ImmergridError):
    """Invalid run configuration."""
