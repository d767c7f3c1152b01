"""ESRI ASCII grid (``.asc``) reader and writer."""

from __future__ import annotations

import math
from decimal import Decimal, localcontext
from pathlib import Path

import numpy as np

from carbon_audit.errors import ParseError, UnsupportedFormatError
from carbon_audit.raster.grid import GeoGrid

_REQUIRED = ("ncols", "nrows", "cellsize")
_KNOWN = {"ncols", "nrows", "xllcorner", "yllcorner", "xllcenter", "yllcenter", "cellsize", "nodata_value"}


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def parse_esri_ascii(text: str | bytes) -> GeoGrid:
    """Parse ESRI ASCII grid text into a :class:`GeoGrid`.

    Header keywords are case-insensitive. Row 1 of the data block is the
    northernmost row. ``xllcenter``/``yllcenter`` headers are accepted and
    shifted by half a cell to the corner convention.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    lines = text.splitlines()
    header: dict[str, str] = {}
    lineno = 0
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        if _is_number(parts[0]):
            lineno -= 1
            break
        key = parts[0].lower()
        if key not in _KNOWN:
            raise ParseError(f"line {lineno}: unknown header keyword {parts[0]!r}")
        if len(parts) != 2:
            raise ParseError(f"line {lineno}: header {parts[0]!r} expects exactly one value")
        if key in header:
            raise ParseError(f"line {lineno}: duplicate header {parts[0]!r}")
        header[key] = parts[1]
    else:
        lineno = len(lines)

    for key in _REQUIRED:
        if key not in header:
            raise ParseError(f"missing header {key!r}")
    for axis in ("x", "y"):
        if (f"{axis}llcorner" in header) == (f"{axis}llcenter" in header):
            raise ParseError(f"exactly one of {axis}llcorner/{axis}llcenter is required")

    def number(key, cast=float):
        raw = header[key]
        try:
            return cast(raw)
        except ValueError:
            raise ParseError(f"header {key!r}: cannot parse value {raw!r}") from None

    ncols, nrows = number("ncols", int), number("nrows", int)
    cellsize = number("cellsize")
    if ncols <= 0 or nrows <= 0:
        raise ParseError(f"ncols/nrows must be positive, got {ncols}x{nrows}")
    if not (math.isfinite(cellsize) and cellsize > 0):
        raise ParseError(f"cellsize must be positive, got {cellsize!r}")
    if "xllcorner" in header:
        xll = number("xllcorner")
    else:
        xll = number("xllcenter") - 0.5 * cellsize
    if "yllcorner" in header:
        number("yllcorner")
        yll = header["yllcorner"]
    else:
        number("yllcenter")
        yll = str(Decimal(header["yllcenter"]) - Decimal(header["cellsize"]) / 2)
    nodata = number("nodata_value") if "nodata_value" in header else None

    body = lines[lineno:]
    tokens = " ".join(body).split()
    expected = ncols * nrows
    if len(tokens) != expected:
        raise ParseError(f"expected {expected} values ({nrows} rows x {ncols} cols), found {len(tokens)}")
    try:
        values = np.array(tokens, dtype=np.float64)
    except ValueError:
        _raise_bad_token(body, lineno)
        raise
    values = values.reshape(nrows, ncols)
    origin_lat = _north_edge(yll, nrows, header["cellsize"])
    try:
        return GeoGrid(values, xll, origin_lat, cellsize, cellsize, nodata)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def _raise_bad_token(body: list[str], offset: int):
    index = 0
    for i, line in enumerate(body, start=offset + 1):
        for col, token in enumerate(line.split(), start=1):
            if not _is_number(token):
                raise ParseError(f"line {i}, value {col} (cell {index}): non-numeric token {token!r}")
            index += 1


def _north_edge(yll: str, nrows: int, cellsize: str) -> float:
    """``yll + nrows * cellsize`` evaluated exactly, then rounded once."""
    with localcontext() as ctx:
        ctx.prec = 1000
        return float(Decimal(yll) + nrows * Decimal(cellsize))


def _south_edge(origin_lat: float, nrows: int, cellsize: float) -> str:
    """Shortest ``yllcorner`` text the reader maps back to ``origin_lat`` exactly."""
    cs = f"{cellsize:.17g}"
    with localcontext() as ctx:
        ctx.prec = 1000
        exact = Decimal(origin_lat) - nrows * Decimal(cs)
        for digits in range(17, 60):
            ctx.prec = digits
            text = format(+exact, "g")
            if _north_edge(text, nrows, cs) == origin_lat:
                return text
    return format(exact, "f")


def write_esri_ascii(grid: GeoGrid) -> str:
    """Serialise a square-pixel grid; values use 17 significant digits."""
    w, h = grid.pixel_width_deg, grid.pixel_height_deg
    if abs(w - h) > 1e-12 * max(w, h):
        raise UnsupportedFormatError(
            f"ESRI ASCII grids need square pixels, got {w!r} x {h!r} degrees"
        )
    lines = [
        f"ncols {grid.ncols}",
        f"nrows {grid.nrows}",
        f"xllcorner {grid.origin_lon:.17g}",
        f"yllcorner {_south_edge(grid.origin_lat, grid.nrows, w)}",
        f"cellsize {w:.17g}",
    ]
    if grid.nodata is not None:
        lines.append(f"NODATA_value {grid.nodata:.17g}")
    for row in grid.values:
        lines.append(" ".join(f"{v:.17g}" for v in row.tolist()))
    return "\n".join(lines) + "\n"


def read_esri_ascii(path: str | Path) -> GeoGrid:
    return parse_esri_ascii(Path(path).read_text(encoding="utf-8"))
