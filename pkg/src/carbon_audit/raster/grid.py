from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class PixelCoord(NamedTuple):
    """Continuous raster position; pixel centres sit at ``+0.5``."""

    col: float
    row: float


class BBox(NamedTuple):
    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    def intersects(self, other: "BBox") -> bool:
        return (
            self.min_lon < other.max_lon
            and other.min_lon < self.max_lon
            and self.min_lat < other.max_lat
            and other.min_lat < self.max_lat
        )


@dataclass(frozen=True, eq=False)
class GeoGrid:
    """Single-band north-up raster in WGS84 degrees.

    ``origin_lon``/``origin_lat`` locate the outer north-west corner of the
    top-left pixel. ``pixel_height_deg`` is positive and measured southward.
    ``values`` has shape ``(nrows, ncols)`` and is made read-only.
    """

    values: np.ndarray
    origin_lon: float
    origin_lat: float
    pixel_width_deg: float
    pixel_height_deg: float
    nodata: float | None = None

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"values must be a non-empty 2-D array, got shape {arr.shape}")
        for name in ("pixel_width_deg", "pixel_height_deg"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v!r}")
        valid = np.isfinite(arr)
        if self.nodata is not None:
            valid |= self.nodata_mask_of(arr)
        if not valid.all():
            raise ValueError("grid contains non-finite values that are not nodata")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "origin_lon", float(self.origin_lon))
        object.__setattr__(self, "origin_lat", float(self.origin_lat))
        object.__setattr__(self, "pixel_width_deg", float(self.pixel_width_deg))
        object.__setattr__(self, "pixel_height_deg", float(self.pixel_height_deg))
        if self.nodata is not None:
            object.__setattr__(self, "nodata", float(self.nodata))

    def nodata_mask_of(self, arr: np.ndarray) -> np.ndarray:
        if self.nodata is None:
            return np.zeros(arr.shape, dtype=bool)
        if math.isnan(self.nodata):
            return np.isnan(arr)
        return arr == self.nodata

    @property
    def nodata_mask(self) -> np.ndarray:
        return self.nodata_mask_of(self.values)

    @property
    def nrows(self) -> int:
        return self.values.shape[0]

    @property
    def ncols(self) -> int:
        return self.values.shape[1]

    @property
    def bbox(self) -> BBox:
        return BBox(
            self.origin_lon,
            self.origin_lat - self.nrows * self.pixel_height_deg,
            self.origin_lon + self.ncols * self.pixel_width_deg,
            self.origin_lat,
        )

    def pixel_center(self, col: int, row: int) -> tuple[float, float]:
        return (
            self.origin_lon + (col + 0.5) * self.pixel_width_deg,
            self.origin_lat - (row + 0.5) * self.pixel_height_deg,
        )

    def with_values(self, values) -> "GeoGrid":
        return GeoGrid(
            values, self.origin_lon, self.origin_lat, self.pixel_width_deg, self.pixel_height_deg, self.nodata
        )

    def __eq__(self, other):
        if not isinstance(other, GeoGrid):
            return NotImplemented
        same_nodata = self.nodata == other.nodata or (
            self.nodata is not None and other.nodata is not None and math.isnan(self.nodata) and math.isnan(other.nodata)
        )
        return (
            self.origin_lon == other.origin_lon
            and self.origin_lat == other.origin_lat
            and self.pixel_width_deg == other.pixel_width_deg
            and self.pixel_height_deg == other.pixel_height_deg
            and same_nodata
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None


def world_to_pixel(grid: GeoGrid, lon, lat) -> PixelCoord:
    """Map lon/lat (scalars or arrays) to continuous pixel coordinates.

    Out-of-range positions are returned unchanged; callers decide.
    """
    col = (np.asarray(lon, dtype=np.float64) - grid.origin_lon) / grid.pixel_width_deg
    row = (grid.origin_lat - np.asarray(lat, dtype=np.float64)) / grid.pixel_height_deg
    if col.ndim == 0:
        return PixelCoord(float(col), float(row))
    return PixelCoord(col, row)
