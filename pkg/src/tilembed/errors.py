"""Exception types shared across the package."""


class TilembedError(Exception):
    """Base class for all package errors."""


class FormatError(TilembedError, ValueError):
    """A file does not conform to its on-disk format."""


class BoundsError(TilembedError, IndexError):
    """A window or coordinate falls outside the raster."""


class ConfigError(TilembedError, ValueError):
    """Invalid or inconsistent configuration values."""


class ShapeError(TilembedError, ValueError):
    """Array shapes disagree with what an operation expects."""


class CoverageError(TilembedError, RuntimeError):
    """The sampler could not find a tile outside the neighborhood."""


class StaleManifestError(TilembedError, RuntimeError):
    """A triplet manifest no longer matches the raster it references."""


class NumericError(TilembedError, ArithmeticError):
    """A non-finite value appeared during computation.

    ``where`` carries the coordinates (layer, epoch, batch) that were known
    when the problem was detected.
    """

    def __init__(self, message, **where):
        self.where = where
        if where:
            coords = ", ".join(f"{k}={v}" for k, v in where.items())
            message = f"{message} ({coords})"
        super().__init__(message)
