"""Exception types shared across the toolkit."""


class TwoTOAError(Exception):
    """Base class for all toolkit errors."""


class CoincidentGeometry(TwoTOAError):
    """Device and anchor closer than the degeneracy threshold (1e-9 m)."""


class NonPositiveSigma(TwoTOAError):
    """A noise standard deviation was zero or negative where a weight is needed."""


class DimensionMismatch(TwoTOAError):
    """Inconsistent array shapes between measurements, anchors or programs."""


class UnobservableGeometry(TwoTOAError):
    """Fisher information is singular (too few anchors or degenerate layout)."""


class SingularNormalMatrix(TwoTOAError):
    """Gauss-Newton normal matrix is numerically singular."""
