"""Decoder for a narrow GeoTIFF subset.

Supported: classic little-endian TIFF, one sample per pixel, strips,
compression none (1) or Deflate (8), float32 or uint8/uint16 samples,
georeferencing through ModelPixelScale + ModelTiepoint, optional
GDAL_NODATA. Anything else raises :class:`UnsupportedFormatError`.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from carbon_audit.errors import ParseError, UnsupportedFormatError
from carbon_audit.raster.grid import GeoGrid

IMAGE_WIDTH = 256
IMAGE_LENGTH = 257
BITS_PER_SAMPLE = 258
COMPRESSION = 259
STRIP_OFFSETS = 273
SAMPLES_PER_PIXEL = 277
ROWS_PER_STRIP = 278
STRIP_BYTE_COUNTS = 279
PLANAR_CONFIG = 284
PREDICTOR = 317
TILE_WIDTH = 322
TILE_LENGTH = 323
TILE_OFFSETS = 324
SAMPLE_FORMAT = 339
MODEL_PIXEL_SCALE = 33550
MODEL_TIEPOINT = 33922
MODEL_TRANSFORMATION = 34264
GEO_KEY_DIRECTORY = 34735
GDAL_NODATA = 42113

GT_RASTER_TYPE_KEY = 1025
RASTER_PIXEL_IS_POINT = 2

# TIFF field type -> (struct code, byte size)
_TYPES = {
    1: ("B", 1),
    2: ("s", 1),
    3: ("H", 2),
    4: ("I", 4),
    5: ("II", 8),
    6: ("b", 1),
    7: ("B", 1),
    8: ("h", 2),
    9: ("i", 4),
    10: ("ii", 8),
    11: ("f", 4),
    12: ("d", 8),
    16: ("Q", 8),
}

_SAMPLE_DTYPES = {
    (1, 8): np.dtype("<u1"),
    (1, 16): np.dtype("<u2"),
    (3, 32): np.dtype("<f4"),
}


def _unsupported(feature: str):
    raise UnsupportedFormatError(f"unsupported GeoTIFF feature: {feature}")


def _read_tags(data: bytes) -> dict[int, tuple]:
    if len(data) < 8:
        raise ParseError("file too short for a TIFF header")
    order = data[:2]
    if order == b"MM":
        _unsupported("big-endian byte order")
    if order != b"II":
        raise ParseError(f"not a TIFF file (byte-order mark {order!r})")
    (magic,) = struct.unpack_from("<H", data, 2)
    if magic == 43:
        _unsupported("BigTIFF")
    if magic != 42:
        raise ParseError(f"not a TIFF file (magic {magic})")
    (ifd,) = struct.unpack_from("<I", data, 4)
    if ifd + 2 > len(data):
        raise ParseError(f"IFD offset {ifd} beyond end of file")
    (count,) = struct.unpack_from("<H", data, ifd)
    tags: dict[int, tuple] = {}
    for i in range(count):
        pos = ifd + 2 + 12 * i
        if pos + 12 > len(data):
            raise ParseError(f"IFD entry {i} truncated")
        tag, typ, n = struct.unpack_from("<HHI", data, pos)
        if typ not in _TYPES:
            continue
        code, size = _TYPES[typ]
        nbytes = size * n
        if nbytes <= 4:
            start = pos + 8
        else:
            (start,) = struct.unpack_from("<I", data, pos + 8)
        if start + nbytes > len(data):
            raise ParseError(f"tag {tag} data beyond end of file")
        if typ == 2:
            raw = data[start : start + nbytes].split(b"\0", 1)[0]
            tags[tag] = (raw.decode("ascii", errors="replace"),)
        elif typ in (5, 10):
            parts = struct.unpack_from("<" + code[0] * (2 * n), data, start)
            tags[tag] = tuple(parts[k] / parts[k + 1] if parts[k + 1] else float("nan") for k in range(0, 2 * n, 2))
        else:
            tags[tag] = struct.unpack_from(f"<{n}{code}", data, start)
    return tags


def _single(tags, tag, name, default=None):
    if tag not in tags:
        if default is None:
            raise ParseError(f"missing required TIFF tag {name} ({tag})")
        return default
    return tags[tag][0]


def parse_geotiff_subset(data: bytes) -> GeoGrid:
    tags = _read_tags(data)

    if TILE_WIDTH in tags or TILE_LENGTH in tags or TILE_OFFSETS in tags:
        _unsupported("tiled layout")
    width = _single(tags, IMAGE_WIDTH, "ImageWidth")
    height = _single(tags, IMAGE_LENGTH, "ImageLength")
    spp = _single(tags, SAMPLES_PER_PIXEL, "SamplesPerPixel", 1)
    if spp != 1:
        _unsupported(f"{spp} samples per pixel")
    compression = _single(tags, COMPRESSION, "Compression", 1)
    if compression not in (1, 8):
        _unsupported(f"compression {compression}")
    predictor = _single(tags, PREDICTOR, "Predictor", 1)
    if predictor != 1:
        _unsupported(f"predictor {predictor}")
    bits = _single(tags, BITS_PER_SAMPLE, "BitsPerSample", 1)
    fmt = _single(tags, SAMPLE_FORMAT, "SampleFormat", 1)
    dtype = _SAMPLE_DTYPES.get((fmt, bits))
    if dtype is None:
        _unsupported(f"sample format {fmt} with {bits} bits per sample")

    if MODEL_TRANSFORMATION in tags and not (MODEL_PIXEL_SCALE in tags and MODEL_TIEPOINT in tags):
        _unsupported("ModelTransformationTag georeferencing")
    if MODEL_PIXEL_SCALE not in tags:
        _unsupported("missing georeferencing tag ModelPixelScaleTag (33550)")
    if MODEL_TIEPOINT not in tags:
        _unsupported("missing georeferencing tag ModelTiepointTag (33922)")
    scale = tags[MODEL_PIXEL_SCALE]
    tie = tags[MODEL_TIEPOINT]
    if len(scale) < 2 or len(tie) < 6:
        raise ParseError("malformed georeferencing tags")
    if len(tie) > 6:
        _unsupported("multiple tiepoints")
    sx, sy = float(scale[0]), float(scale[1])
    i, j, _, x, y, _ = (float(v) for v in tie)
    origin_lon = x - i * sx
    origin_lat = y + j * sy
    if _pixel_is_point(tags.get(GEO_KEY_DIRECTORY, ())):
        origin_lon -= 0.5 * sx
        origin_lat += 0.5 * sy

    nodata = None
    if GDAL_NODATA in tags:
        text = tags[GDAL_NODATA][0].strip()
        try:
            nodata = float(text)
        except ValueError:
            raise ParseError(f"GDAL_NODATA value {text!r} is not numeric") from None

    offsets = tags.get(STRIP_OFFSETS)
    counts = tags.get(STRIP_BYTE_COUNTS)
    if offsets is None or counts is None or len(offsets) != len(counts):
        raise ParseError("missing or inconsistent StripOffsets/StripByteCounts")
    rows_per_strip = min(_single(tags, ROWS_PER_STRIP, "RowsPerStrip", height), height)
    row_bytes = width * dtype.itemsize
    chunks = []
    for k, (off, n) in enumerate(zip(offsets, counts)):
        if off + n > len(data):
            raise ParseError(f"strip {k} extends beyond end of file")
        raw = data[off : off + n]
        if compression == 8:
            try:
                raw = zlib.decompress(raw)
            except zlib.error as exc:
                raise ParseError(f"strip {k}: corrupt Deflate stream ({exc})") from None
        rows = min(rows_per_strip, height - k * rows_per_strip)
        need = rows * row_bytes
        if len(raw) < need:
            raise ParseError(f"strip {k}: expected {need} bytes, got {len(raw)}")
        chunks.append(raw[:need])
    buf = b"".join(chunks)
    if len(buf) != height * row_bytes:
        raise ParseError(f"pixel data has {len(buf)} bytes, expected {height * row_bytes}")
    values = np.frombuffer(buf, dtype=dtype).reshape(height, width).astype(np.float64)
    try:
        return GeoGrid(values, origin_lon, origin_lat, sx, sy, nodata)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def _pixel_is_point(keys: tuple) -> bool:
    if len(keys) < 4:
        return False
    nkeys = keys[3]
    for k in range(nkeys):
        entry = keys[4 + 4 * k : 8 + 4 * k]
        if len(entry) == 4 and entry[0] == GT_RASTER_TYPE_KEY and entry[1] == 0:
            return entry[3] == RASTER_PIXEL_IS_POINT
    return False


def read_geotiff(path: str | Path) -> GeoGrid:
    return parse_geotiff_subset(Path(path).read_bytes())
