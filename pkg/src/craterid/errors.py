"""Exception hierarchy shared across the package.

Every failure mode that a caller can reasonably branch on gets its own
class; anything else surfaces as the nearest parent.
"""


class CraterIdError(Exception):
    """Base class for all package errors."""


class GeometryError(CraterIdError):
    """Invalid or degenerate geometric input."""


class InvalidAxesError(GeometryError):
    """Ellipse semi-axes violate a >= b > 0."""


class NotAnEllipseError(GeometryError):
    """Conic matrix does not describe a proper ellipse."""


class SingularConicError(GeometryError):
    """Operation requires a full-rank conic."""


class WrongEigenvalueBranchError(GeometryError):
    """Selected pencil eigenvalue yields a complex line pair."""


class AmbiguousSeparationError(GeometryError):
    """Neither or both candidate lines separate the two ellipse centers."""


class PolarSingularityError(GeometryError):
    """East direction is undefined for a crater at a lunar pole."""


class BehindCameraError(GeometryError):
    """Point to project is not strictly in front of the camera."""


class DegenerateViewError(GeometryError):
    """Quadric projection collapsed (camera lies in the crater plane)."""


class SingularHomographyError(GeometryError):
    """Crater-plane to image homography is not invertible."""


class NotNormalizedError(GeometryError):
    """Conic was expected to carry unit determinant."""


class OverlapError(GeometryError):
    """Conic pair overlaps; separating-line recovery is undefined."""


class AcoshDomainError(GeometryError):
    """Cayley-Klein ratio fell below the acosh domain."""


class DegenerateBlockError(GeometryError):
    """Scale estimation block is numerically zero."""


class RankDeficientGeometryError(GeometryError):
    """Crater set too degenerate for a position solution."""


class EmptyUnionError(GeometryError):
    """Jaccard union contains no sample points."""


class NumericAnomalyError(CraterIdError):
    """Intermediate value far enough outside its domain to signal a bug."""


class SchemaError(CraterIdError):
    """Input file does not follow the documented schema."""


class DimensionMismatchError(CraterIdError):
    """Query vector dimension differs from the index dimension."""


class VersionMismatchError(CraterIdError):
    """Index file format version or config hash does not match."""
