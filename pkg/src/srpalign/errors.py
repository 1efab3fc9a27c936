"""Exception types shared across the package."""


class SrpError(Exception):
    """Base class for errors raised by srpalign."""


class DimensionError(SrpError, ValueError):
    """Array shapes are inconsistent or a dimension is invalid."""


class DataError(SrpError, ValueError):
    """Input data is non-finite, empty or otherwise unusable."""


class DegenerateCovarianceError(DataError):
    """Covariance spectra coincide, so the balancing factor is undefined."""
