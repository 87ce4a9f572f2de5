"""Exception hierarchy shared across the toolkit."""


class BezTetError(Exception):
    """Base class for all toolkit errors."""


class InputError(BezTetError):
    """Invalid user-supplied value (bad barycentric point, parameter out of range, ...)."""


class FormatError(BezTetError):
    """Malformed external file (MSH grammar, problem definition schema)."""


class NumericalError(BezTetError):
    """A numerical procedure failed (singular matrix, solver non-convergence)."""


class MeshValidityError(BezTetError):
    """Mesh violates a geometric validity contract (non-positive Jacobian, ...)."""


class ClassificationError(BezTetError):
    """A boundary face could not be matched against any tagged surface."""


class ReconstructionError(BezTetError):
    """Boundary reconstruction produced an invalid control net (e.g. w <= 0)."""


class InversionError(NumericalError):
    """Point inversion did not reach the residual tolerance.

    Carries the best residual and parameter pair reached so callers can
    report how close the projection got.
    """

    def __init__(self, message, residual=None, uv=None):
        super().__init__(message)
        self.residual = residual
        self.uv = uv


class TopologyError(BezTetError):
    """Shell/face/edge topology is not closed or otherwise unusable."""


class CapabilityError(BezTetError):
    """Requested an entity or feature outside the supported subset."""
