"""Cloud-artifact detection and masking for DEM rasters."""

__version__ = "0.1.0"

from .raster import ConfidenceGrid, DemGrid, MaskGrid

__all__ = ["DemGrid", "MaskGrid", "ConfidenceGrid", "__version__"]
