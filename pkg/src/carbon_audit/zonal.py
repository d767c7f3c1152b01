"""Plot-scale polygon geometry and polygon-filtered zonal means.

Areas and distances use a local equirectangular projection about a
reference latitude, which is adequate below ~0.5 degree extents.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from carbon_audit.errors import (
    DomainError,
    EmptyZoneError,
    GeometryError,
    NodataZoneError,
    UnsupportedExtentError,
)
from carbon_audit.raster import BBox, GeoGrid, regrid

EARTH_RADIUS_M = 6371007.181
M2_PER_HA = 10_000.0
MAX_EXTENT_DEG = 0.5


class DegeneratePolygonWarning(UserWarning):
    pass


def _ring(coords) -> tuple[tuple[float, float], ...]:
    pts = [(float(x), float(y)) for x, y, *_ in coords]
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts.pop()
    return tuple(pts)


@dataclass(frozen=True)
class GeoPolygon:
    """Polygon in (lon, lat) degrees; rings are implicitly closed."""

    exterior: tuple[tuple[float, float], ...]
    holes: tuple[tuple[tuple[float, float], ...], ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "exterior", _ring(self.exterior))
        object.__setattr__(self, "holes", tuple(_ring(h) for h in self.holes))

    @classmethod
    def from_geojson(cls, geometry: dict, allow_multipolygon: bool = False) -> "GeoPolygon":
        """Build from a GeoJSON ``Polygon`` or ``MultiPolygon`` geometry.

        Only the first member of a MultiPolygon is used; additional members
        raise unless ``allow_multipolygon`` is set, in which case they are
        dropped with a warning.
        """
        kind = geometry.get("type")
        coords = geometry.get("coordinates")
        if kind == "MultiPolygon":
            if not coords:
                raise GeometryError("empty MultiPolygon")
            if len(coords) > 1:
                if not allow_multipolygon:
                    raise GeometryError(
                        f"MultiPolygon has {len(coords)} parts; only single-part sites are accepted"
                    )
                warnings.warn(f"ignoring {len(coords) - 1} extra MultiPolygon part(s)", stacklevel=2)
            coords = coords[0]
        elif kind != "Polygon":
            raise GeometryError(f"expected Polygon or MultiPolygon geometry, got {kind!r}")
        if not coords:
            raise GeometryError("polygon has no rings")
        try:
            return cls(coords[0], tuple(coords[1:]))
        except (TypeError, ValueError) as exc:
            raise GeometryError(f"malformed polygon coordinates: {exc}") from None

    @property
    def rings(self):
        return (self.exterior, *self.holes)

    @property
    def bbox(self) -> BBox:
        xs = [p[0] for p in self.exterior]
        ys = [p[1] for p in self.exterior]
        return BBox(min(xs), min(ys), max(xs), max(ys))

    @property
    def centroid(self) -> tuple[float, float]:
        """Mean of the exterior vertices (the projection reference point)."""
        n = len(self.exterior)
        return (math.fsum(p[0] for p in self.exterior) / n, math.fsum(p[1] for p in self.exterior) / n)

    def validate(self) -> "GeoPolygon":
        """Check ring sizes, simplicity and hole containment."""
        for k, ring in enumerate(self.rings):
            label = "exterior ring" if k == 0 else f"hole {k}"
            if len(set(ring)) < 3:
                raise GeometryError(f"{label} has fewer than 3 distinct vertices")
            if not all(math.isfinite(c) for p in ring for c in p):
                raise GeometryError(f"{label} has non-finite coordinates")
            if _self_intersects(ring):
                raise GeometryError(f"{label} is self-intersecting")
        for k, hole in enumerate(self.holes, start=1):
            if not all(_point_in_ring(self.exterior, x, y) for x, y in hole):
                raise GeometryError(f"hole {k} is not enclosed by the exterior ring")
        return self


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p) -> bool:
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def _segments_cross(p1, p2, p3, p4) -> bool:
    d1, d2 = _orient(p3, p4, p1), _orient(p3, p4, p2)
    d3, d4 = _orient(p1, p2, p3), _orient(p1, p2, p4)
    if ((d1 > 0) != (d2 > 0)) and d1 != 0 and d2 != 0 and ((d3 > 0) != (d4 > 0)) and d3 != 0 and d4 != 0:
        return True
    return (
        (d1 == 0 and _on_segment(p3, p4, p1))
        or (d2 == 0 and _on_segment(p3, p4, p2))
        or (d3 == 0 and _on_segment(p1, p2, p3))
        or (d4 == 0 and _on_segment(p1, p2, p4))
    )


def _self_intersects(ring) -> bool:
    n = len(ring)
    edges = [(ring[i], ring[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            # adjacent edges share a vertex by construction
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(*edges[i], *edges[j]):
                return True
    return False


def _point_in_ring(ring, x, y) -> bool:
    """Even-odd test; points on an edge count as inside."""
    inside = False
    n = len(ring)
    j = n - 1
    for i in range(n):
        xi, yi = ring[i]
        xj, yj = ring[j]
        if _orient((xi, yi), (xj, yj), (x, y)) == 0 and _on_segment((xi, yi), (xj, yj), (x, y)):
            return True
        if (yi > y) != (yj > y):
            xcross = xi + (y - yi) * (xj - xi) / (yj - yi)
            if x < xcross:
                inside = not inside
        j = i
    return inside


def point_in_polygon(poly: GeoPolygon, lon: float, lat: float) -> bool:
    """Even-odd ray casting; boundary points are inside, hole interiors are not."""
    if len(set(poly.exterior)) < 3:
        raise GeometryError("polygon has fewer than 3 distinct vertices")
    if not _point_in_ring(poly.exterior, lon, lat):
        return False
    for hole in poly.holes:
        if _point_in_ring(hole, lon, lat) and not _on_ring_edge(hole, lon, lat):
            return False
    return True


def _on_ring_edge(ring, x, y) -> bool:
    n = len(ring)
    for i in range(n):
        a, b = ring[i], ring[(i + 1) % n]
        if _orient(a, b, (x, y)) == 0 and _on_segment(a, b, (x, y)):
            return True
    return False


def _ring_mask(ring, x: np.ndarray, y: np.ndarray):
    """Vectorised even-odd test; returns ``(inside, on_edge)`` masks."""
    inside = np.zeros(x.shape, dtype=bool)
    edge = np.zeros(x.shape, dtype=bool)
    n = len(ring)
    for i in range(n):
        xi, yi = ring[i]
        xj, yj = ring[i - 1]
        cross = (xj - xi) * (y - yi) - (yj - yi) * (x - xi)
        within = (
            (np.minimum(xi, xj) <= x) & (x <= np.maximum(xi, xj)) & (np.minimum(yi, yj) <= y) & (y <= np.maximum(yi, yj))
        )
        edge |= (cross == 0) & within
        straddle = (yi > y) != (yj > y)
        if yj != yi:
            xcross = xi + (y - yi) * (xj - xi) / (yj - yi)
            inside ^= straddle & (x < xcross)
    return inside, edge


def points_in_polygon(poly: GeoPolygon, lon, lat) -> np.ndarray:
    """Array version of :func:`point_in_polygon`."""
    x = np.asarray(lon, dtype=np.float64)
    y = np.asarray(lat, dtype=np.float64)
    inside, edge = _ring_mask(poly.exterior, x, y)
    result = inside | edge
    for hole in poly.holes:
        h_in, h_edge = _ring_mask(hole, x, y)
        result &= ~(h_in & ~h_edge)
    return result


def project_local(lon, lat, lon0: float, lat0: float):
    """Equirectangular metres about ``(lon0, lat0)``."""
    lon = np.asarray(lon, dtype=np.float64)
    lat = np.asarray(lat, dtype=np.float64)
    k = math.radians(1.0) * EARTH_RADIUS_M
    x = (lon - lon0) * k * math.cos(math.radians(lat0))
    y = (lat - lat0) * k
    return x, y


def metres_to_degrees(metres: float, lat0: float) -> tuple[float, float]:
    """Degrees of (longitude, latitude) spanning ``metres`` at ``lat0``."""
    dlat = math.degrees(metres / EARTH_RADIUS_M)
    dlon = dlat / math.cos(math.radians(lat0))
    return dlon, dlat


def _shoelace(xs: np.ndarray, ys: np.ndarray) -> float:
    return 0.5 * abs(math.fsum(xs * np.roll(ys, -1) - np.roll(xs, -1) * ys))


def polygon_area_ha(poly: GeoPolygon) -> float:
    """Planar area (ha) of the polygon minus its holes."""
    if len(set(poly.exterior)) < 3:
        raise GeometryError("polygon has fewer than 3 distinct vertices")
    bb = poly.bbox
    if bb.max_lon - bb.min_lon >= MAX_EXTENT_DEG or bb.max_lat - bb.min_lat >= MAX_EXTENT_DEG:
        raise UnsupportedExtentError(
            f"polygon extent {bb.max_lon - bb.min_lon:.4g} x {bb.max_lat - bb.min_lat:.4g} deg "
            f"exceeds the {MAX_EXTENT_DEG} deg local-projection limit"
        )
    lon0, lat0 = poly.centroid
    area = 0.0
    for k, ring in enumerate(poly.rings):
        xs, ys = project_local([p[0] for p in ring], [p[1] for p in ring], lon0, lat0)
        a = _shoelace(xs, ys)
        area = area + a if k == 0 else area - a
    if area == 0.0:
        warnings.warn("polygon is degenerate (zero area)", DegeneratePolygonWarning, stacklevel=2)
    return area / M2_PER_HA


def distance_to_polygon_m(poly: GeoPolygon, lon: float, lat: float) -> float:
    """Metres from a point to the polygon; 0 for points inside."""
    if point_in_polygon(poly, lon, lat):
        return 0.0
    lon0, lat0 = poly.centroid
    px, py = project_local(lon, lat, lon0, lat0)
    best = math.inf
    for ring in poly.rings:
        xs, ys = project_local([p[0] for p in ring], [p[1] for p in ring], lon0, lat0)
        ax, ay = xs, ys
        bx, by = np.roll(xs, -1), np.roll(ys, -1)
        dx, dy = bx - ax, by - ay
        seg2 = dx * dx + dy * dy
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(seg2 > 0, ((px - ax) * dx + (py - ay) * dy) / seg2, 0.0)
        t = np.clip(t, 0.0, 1.0)
        d = np.hypot(ax + t * dx - px, ay + t * dy - py)
        best = min(best, float(d.min()))
    return best


@dataclass(frozen=True)
class ZonalResult:
    mean_t_per_ha: float
    cell_count: int
    nodata_count: int
    target_pixel_m: float
    polygon_area_ha: float


def zonal_filtered_mean(grid: GeoGrid, poly: GeoPolygon, target_pixel_m: float = 1.0) -> ZonalResult:
    """Interpolate ``grid`` to ``target_pixel_m`` cells and average inside ``poly``.

    Cells are kept when their centre is inside the polygon. ``cell_count``
    counts kept cells with valid values; ``nodata_count`` counts kept cells
    whose interpolated value is nodata (or outside the raster).
    """
    if not (math.isfinite(target_pixel_m) and target_pixel_m > 0):
        raise DomainError(f"target_pixel_m must be positive, got {target_pixel_m!r}")
    area = polygon_area_ha(poly)
    bb = poly.bbox
    if not bb.intersects(grid.bbox):
        raise EmptyZoneError(f"polygon {tuple(bb)} does not intersect raster extent {tuple(grid.bbox)}")
    _, lat0 = poly.centroid
    fine = regrid(grid, metres_to_degrees(target_pixel_m, lat0), bb)
    j = np.arange(fine.ncols)
    i = np.arange(fine.nrows)
    lon = fine.origin_lon + (j + 0.5) * fine.pixel_width_deg
    lat = fine.origin_lat - (i + 0.5) * fine.pixel_height_deg
    lon_g, lat_g = np.meshgrid(lon, lat)
    keep = points_in_polygon(poly, lon_g, lat_g)
    kept = fine.values[keep]
    if kept.size == 0:
        raise EmptyZoneError("no interpolated cell centre falls inside the polygon")
    valid = ~np.isnan(kept)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise NodataZoneError(f"all {kept.size} cells inside the polygon are nodata")
    vals = kept[valid]
    # shifted sum keeps constant fields exact
    ref = float(vals[0])
    mean = ref + math.fsum(vals - ref) / n_valid
    return ZonalResult(
        mean_t_per_ha=mean,
        cell_count=n_valid,
        nodata_count=int(kept.size - n_valid),
        target_pixel_m=float(target_pixel_m),
        polygon_area_ha=area,
    )
