"""Rooftop solar potential analysis from satellite imagery.

Pipeline stages: tile acquisition, grayscale raster kernels, adaptive Canny
edges, Gabor/GMM texture splitting, watershed and GVF-snake region
segmentation, polygon shape approximation, panel placement, and report
generation. See the README for the CLI surface.
"""

from . import (  # noqa: F401
    edges,
    fixtures,
    geometry,
    pipeline,
    placement,
    raster,
    regionseg,
    texture,
    tiles,
)
from .errors import (  # noqa: F401
    DegenerateInputError,
    DimensionError,
    NoRoofFoundError,
    ParameterError,
    ProviderError,
    RoofSolarError,
    StabilityError,
    TileNotFoundError,
    TileTimeoutError,
)

__version__ = "0.1.0"
