"""Exception types raised across the package."""


class CutFEMError(Exception):
    """Base class for all package errors."""


class GeometryError(CutFEMError, ValueError):
    pass


class AxisSingularity(GeometryError):
    """Query point lies on the symmetry axis of a torus."""


class MedialAxis(GeometryError):
    """Closest point projection is not unique at the query point."""


class NonCubicBox(CutFEMError, ValueError):
    pass


class EmptyActiveMesh(CutFEMError):
    pass


class DegenerateSegment(CutFEMError):
    pass


class DegenerateFacet(CutFEMError):
    pass


class ZeroGradient(CutFEMError):
    pass


class DofMismatch(CutFEMError):
    pass


class NoConvergence(CutFEMError):
    """Iterative method hit its iteration cap.

    The best iterate found so far is kept on ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NonPositiveError(CutFEMError, ValueError):
    pass
