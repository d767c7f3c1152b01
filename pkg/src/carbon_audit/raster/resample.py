"""Keys cubic-convolution resampling (a = -0.5) with clamp edge padding."""

from __future__ import annotations

import math

import numpy as np

from carbon_audit.errors import DomainError, OutOfBoundsError
from carbon_audit.raster.grid import BBox, GeoGrid, world_to_pixel

KEYS_A = -0.5
KERNEL_NAME = "keys-cubic-convolution(a=-0.5)"

_OFFSETS = np.arange(-1, 3)


def cubic_kernel(t):
    """Keys cubic-convolution weight at distance ``t`` (scalar or array)."""
    a = KEYS_A
    x = np.abs(np.asarray(t, dtype=np.float64))
    x2 = x * x
    x3 = x2 * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    w = np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))
    if w.ndim == 0:
        return float(w)
    return w


def _axis_support(coord: np.ndarray, n: int):
    """Clamped 4-tap indices and weights along one axis.

    ``coord`` is a continuous pixel coordinate (centres at +0.5).
    """
    x = coord - 0.5
    base = np.floor(x)
    frac = x - base
    idx = np.clip(base.astype(np.int64)[:, None] + _OFFSETS, 0, n - 1)
    w = cubic_kernel(frac[:, None] - _OFFSETS)
    lin_idx = np.clip(base.astype(np.int64)[:, None] + np.arange(2), 0, n - 1)
    lin_w = np.stack([1.0 - frac, frac], axis=1)
    return idx, w, lin_idx, lin_w


def _separable(values, mask, ridx, rw, cidx, cw):
    cells = values[ridx[:, :, None], cidx[:, None, :]]
    bad = mask[ridx[:, :, None], cidx[:, None, :]]
    live = (rw != 0.0)[:, :, None] & (cw != 0.0)[:, None, :]
    hit = (bad & live).any(axis=(1, 2))
    cells = np.where(bad, 0.0, cells)
    # Weigh differences from the heaviest cell: the weights only sum to one up
    # to rounding, so this keeps flat neighbourhoods and pixel centres exact.
    n = np.arange(len(cells))
    anchor = cells[n, np.argmax(rw, axis=1), np.argmax(cw, axis=1)]
    out = anchor + np.einsum("nj,njk,nk->n", rw, cells - anchor[:, None, None], cw)
    return out, hit


def sample_pixels(grid: GeoGrid, col, row, outside: str = "raise") -> np.ndarray:
    """Cubic-convolution samples at continuous pixel coordinates.

    Cells of the 4x4 support carrying nodata (with non-zero weight) trigger a
    bilinear fallback on the 2x2 neighbourhood; if that also touches nodata
    the result is NaN. Positions outside ``[0, ncols] x [0, nrows]`` raise
    :class:`OutOfBoundsError`, or yield NaN when ``outside="nan"``.
    """
    col = np.atleast_1d(np.asarray(col, dtype=np.float64))
    row = np.atleast_1d(np.asarray(row, dtype=np.float64))
    col, row = np.broadcast_arrays(col, row)
    shape = col.shape
    col, row = col.ravel(), row.ravel()
    inside = (col >= 0) & (col <= grid.ncols) & (row >= 0) & (row <= grid.nrows)
    if not inside.all() and outside == "raise":
        k = int(np.argmin(inside))
        raise OutOfBoundsError(
            f"sample at pixel ({col[k]:.6g}, {row[k]:.6g}) lies outside the "
            f"{grid.ncols}x{grid.nrows} grid"
        )
    out = np.full(col.shape, np.nan)
    if inside.any():
        c, r = col[inside], row[inside]
        mask = grid.nodata_mask
        cidx, cw, clin, clw = _axis_support(c, grid.ncols)
        ridx, rw, rlin, rlw = _axis_support(r, grid.nrows)
        vals, hit = _separable(grid.values, mask, ridx, rw, cidx, cw)
        if hit.any():
            lin, lin_hit = _separable(grid.values, mask, rlin[hit], rlw[hit], clin[hit], clw[hit])
            vals[hit] = np.where(lin_hit, np.nan, lin)
        out[inside] = vals
    return out.reshape(shape)


def bicubic_sample(grid: GeoGrid, lon: float, lat: float) -> float:
    """Interpolated value at one lon/lat; NaN if the support is nodata."""
    pc = world_to_pixel(grid, lon, lat)
    return float(sample_pixels(grid, pc.col, pc.row)[0])


def _pixel_size(target_pixel_deg) -> tuple[float, float]:
    if np.ndim(target_pixel_deg) == 0:
        w = h = float(target_pixel_deg)
    else:
        w, h = (float(v) for v in target_pixel_deg)
    if not (math.isfinite(w) and math.isfinite(h) and w > 0 and h > 0):
        raise DomainError(f"target pixel size must be positive, got {target_pixel_deg!r}")
    return w, h


def _snap_count(span: float, step: float) -> int:
    return max(1, math.ceil(span / step - 1e-9))


def regrid(grid: GeoGrid, target_pixel_deg, bbox: BBox) -> GeoGrid:
    """Resample ``grid`` onto a lattice anchored at the bbox north-west corner.

    ``target_pixel_deg`` is a scalar (square pixels) or a ``(width, height)``
    pair in degrees. The output extent covers ``bbox`` rounded outward to
    whole target pixels. Output cells whose centres fall outside the source
    extent, or whose support is nodata, are NaN and the output grid then
    carries ``nodata=nan``.
    """
    w, h = _pixel_size(target_pixel_deg)
    bbox = BBox(*bbox)
    if not (bbox.max_lon > bbox.min_lon and bbox.max_lat > bbox.min_lat):
        raise DomainError(f"bbox is empty: {tuple(bbox)}")
    if not bbox.intersects(grid.bbox):
        raise DomainError(f"bbox {tuple(bbox)} does not intersect grid extent {tuple(grid.bbox)}")
    ncols = _snap_count(bbox.max_lon - bbox.min_lon, w)
    nrows = _snap_count(bbox.max_lat - bbox.min_lat, h)
    col0 = (bbox.min_lon - grid.origin_lon) / grid.pixel_width_deg
    row0 = (grid.origin_lat - bbox.max_lat) / grid.pixel_height_deg
    cols = col0 + (np.arange(ncols) + 0.5) * (w / grid.pixel_width_deg)
    rows = row0 + (np.arange(nrows) + 0.5) * (h / grid.pixel_height_deg)
    cc, rr = np.meshgrid(cols, rows)
    values = sample_pixels(grid, cc, rr, outside="nan")
    nodata = float("nan") if np.isnan(values).any() else None
    return GeoGrid(values, bbox.min_lon, bbox.max_lat, w, h, nodata)
