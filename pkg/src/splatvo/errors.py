"""Exception hierarchy shared across the package."""


class SplatVOError(Exception):
    """Base class for all package errors."""


class BehindCamera(SplatVOError):
    """Projection requested for a point with non-positive depth."""


class InvalidDepth(SplatVOError):
    """Inverse depth must be strictly positive."""


class OutOfBounds(SplatVOError):
    """Sample coordinates outside the valid image domain."""


class PyramidTooDeep(SplatVOError):
    """Requested pyramid would shrink a level below the minimum size."""


class DimensionMismatch(SplatVOError):
    """Two images that must share dimensions do not."""


class ParseError(SplatVOError):
    """Malformed text input; carries the offending line number."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class IoError(SplatVOError):
    """Unreadable or unwritable file."""


class InvalidTrajectory(SplatVOError):
    """Trajectory specification is empty or ill-ordered."""


class TexturelessInput(SplatVOError):
    """Too few high-gradient pixels to select tracking points."""


class TrackingLost(SplatVOError):
    """Frame alignment diverged beyond recovery."""


class GaugeError(SplatVOError):
    """Reduced bundle-adjustment system is rank deficient (no parallax)."""


class InsufficientSupport(SplatVOError):
    """Too few usable pixels for a local covariance fit."""


class FitRejected(SplatVOError):
    """Covariance fit is indefinite and its residual exceeds the bound."""


class RankDeficient(SplatVOError):
    """Stacked lifting system does not constrain all six covariance entries."""


class InvalidCovariance(SplatVOError):
    """Covariance input contains non-finite entries."""


class EmptyScene(SplatVOError):
    """Operation requires at least one splat."""


class InsufficientOverlap(SplatVOError):
    """Fewer than three associable trajectory pose pairs."""


class NoValidDepth(SplatVOError):
    """No pixel has valid depth in both images."""
