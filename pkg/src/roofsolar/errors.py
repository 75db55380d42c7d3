"""Exception types shared across the pipeline."""


class RoofSolarError(Exception):
    """Base class for all library errors."""


class ParameterError(RoofSolarError, ValueError):
    """An argument violates a precondition (bad sigma, even kernel size, ...)."""


class DimensionError(ParameterError):
    """Image or mask dimensions are empty or inconsistent."""


class StabilityError(ParameterError):
    """An iterative scheme was configured outside its stability region."""


class DegenerateInputError(RoofSolarError, ValueError):
    """Input carries no usable signal (e.g. single-valued histogram)."""


class NoRoofFoundError(RoofSolarError):
    """Segmentation produced no plausible roof candidate."""


class ProviderError(RoofSolarError):
    """Tile provider failed (HTTP error, decode failure)."""


class TileNotFoundError(ProviderError):
    """Fixture provider has no file for the requested tile."""


class TileTimeoutError(ProviderError):
    """Tile fetch timed out."""
