"""Exception types shared across the library."""


class NhblochError(Exception):
    """Base class for all library-specific errors."""


class NonPeriodicAxis(NhblochError):
    """A coordinate loop was requested along an axis that does not wrap."""


class AmbiguousWrap(NhblochError):
    """A polyline segment jumps by >= pi along a periodic axis."""


class DimensionTooLarge(NhblochError):
    """Matrix dimension exceeds the small-matrix kernel limit (n <= 6)."""


class NoConvergence(NhblochError):
    """Root iteration failed to converge; input may need rescaling."""


class DefectiveCluster(NhblochError):
    """A repeated eigenvalue admits fewer eigenvectors than its multiplicity."""


class InvalidParams(NhblochError):
    """Model parameters outside the family's domain."""


class NearDegeneracyUnresolved(NhblochError):
    """Band matching stayed ambiguous after maximal step refinement."""


class BasepointMismatch(NhblochError):
    """Loop composition requires a shared basepoint with matching bands."""


class ReferenceOnSpectrum(NhblochError):
    """Winding reference energy lies on a band trajectory."""


class RefinementDiverged(NhblochError):
    """Newton refinement of a feature candidate left its search region."""


class TraceStalled(NhblochError):
    """Branch-cut tracing collapsed its step without terminating."""


class TorusCutViolation(NhblochError):
    """A branch cut ran off the scanned window of a torus, which would
    require an unpaired exceptional point."""


class NoSignChange(NhblochError):
    """Bisection endpoints carry equal observable values."""


class ConfigError(NhblochError):
    """Invalid run configuration."""
