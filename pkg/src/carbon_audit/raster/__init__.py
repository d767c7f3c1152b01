"""Georeferenced grids, raster file formats and cubic resampling."""

from carbon_audit.raster.esri import parse_esri_ascii, read_esri_ascii, write_esri_ascii
from carbon_audit.raster.geotiff import parse_geotiff_subset, read_geotiff
from carbon_audit.raster.grid import BBox, GeoGrid, PixelCoord, world_to_pixel
from carbon_audit.raster.resample import (
    KERNEL_NAME,
    bicubic_sample,
    cubic_kernel,
    regrid,
    sample_pixels,
)

__all__ = [
    "BBox",
    "GeoGrid",
    "KERNEL_NAME",
    "PixelCoord",
    "bicubic_sample",
    "cubic_kernel",
    "parse_esri_ascii",
    "parse_geotiff_subset",
    "read_esri_ascii",
    "read_geotiff",
    "read_raster",
    "regrid",
    "sample_pixels",
    "world_to_pixel",
    "write_esri_ascii",
]


def read_raster(path):
    """Load a GeoTIFF (``.tif``/``.tiff``) or ESRI ASCII grid by extension."""
    from pathlib import Path

    path = Path(path)
    if path.suffix.lower() in (".tif", ".tiff"):
        return read_geotiff(path)
    return read_esri_ascii(path)
