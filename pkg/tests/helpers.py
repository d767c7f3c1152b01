"""Shared builders for synthetic sites and rasters."""

import math

import numpy as np

from carbon_audit.fielddata import SiteDefinition, TreeRecord
from carbon_audit.raster import GeoGrid
from carbon_audit.zonal import EARTH_RADIUS_M, GeoPolygon

GFW_PIXEL_DEG = 0.00025  # ~28 m at the equator, close to the 30 m product


def offset_deg(lat0, dx_m, dy_m):
    """Invert the local equirectangular projection at ``lat0``."""
    dlat = math.degrees(dy_m / EARTH_RADIUS_M)
    dlon = math.degrees(dx_m / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return dlon, dlat


def square(lon0, lat0, side_m):
    h = side_m / 2.0
    pts = []
    for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
        dlon, dlat = offset_deg(lat0, sx * h, sy * h)
        pts.append((lon0 + dlon, lat0 + dlat))
    return GeoPolygon(pts)


def rectangle(lon0, lat0, width_m, height_m):
    pts = []
    for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
        dlon, dlat = offset_deg(lat0, sx * width_m / 2, sy * height_m / 2)
        pts.append((lon0 + dlon, lat0 + dlat))
    return GeoPolygon(pts)


def irregular(lon0, lat0, radius_m, n=9, seed=0):
    """Star-shaped (hence simple) polygon with jittered radii."""
    rng = np.random.default_rng(seed)
    pts = []
    for k in range(n):
        a = 2 * math.pi * k / n
        r = radius_m * rng.uniform(0.6, 1.0)
        dlon, dlat = offset_deg(lat0, r * math.cos(a), r * math.sin(a))
        pts.append((lon0 + dlon, lat0 + dlat))
    return GeoPolygon(pts)


def grid_around(lon0, lat0, n, fn=None, pixel=GFW_PIXEL_DEG, nodata=None):
    """``n x n`` grid centred on (lon0, lat0); ``fn(col, row)`` gives values at centres."""
    origin_lon = lon0 - n * pixel / 2
    origin_lat = lat0 + n * pixel / 2
    if fn is None:
        values = np.full((n, n), 7.0)
    else:
        cc, rr = np.meshgrid(np.arange(n) + 0.5, np.arange(n) + 0.5)
        values = fn(cc, rr)
    return GeoGrid(values, origin_lon, origin_lat, pixel, pixel, nodata)


def smooth_field(cc, rr):
    return 80 + 30 * np.sin(0.35 * cc) * np.cos(0.27 * rr) + 2.0 * cc - 1.5 * rr


def trees_in(poly, n, family_species="Theobroma cacao", dbh=10.0, seed=0, prefix="t"):
    rng = np.random.default_rng(seed)
    bb = poly.bbox
    from carbon_audit.zonal import point_in_polygon

    recs = []
    while len(recs) < n:
        lon = rng.uniform(bb.min_lon, bb.max_lon)
        lat = rng.uniform(bb.min_lat, bb.max_lat)
        if point_in_polygon(poly, lon, lat):
            recs.append(TreeRecord(f"{prefix}{len(recs):04d}", lat, lon, family_species, dbh))
    return recs


def site(site_id, poly, records, declared=None):
    return SiteDefinition(site_id, poly, records, declared)


# (trees, plot area ha) per site, from the published site table
PLOT_SITES = [(743, 0.53), (929, 0.47), (846, 0.48), (789, 0.51), (484, 0.56), (872, 0.62)]
SPECIES_MIX = ["Theobroma cacao", "Theobroma cacao", "Musa paradisiaca", "banana", "cacao"]


def bundle_sites(lon0=-80.45, lat0=-1.2, spacing_m=150.0, trees_scale=1.0, seed=0):
    """Six square sites in a row with the published plot areas and (scaled) tree counts."""
    rng = np.random.default_rng(seed)
    sites = []
    for k, (n_trees, area) in enumerate(PLOT_SITES):
        dlon, _ = offset_deg(lat0, (k - 2.5) * spacing_m, 0.0)
        poly = square(lon0 + dlon, lat0, math.sqrt(area * 10_000.0))
        recs = trees_in(poly, max(1, int(n_trees * trees_scale)), seed=seed + k, prefix=f"s{k + 1}-")
        recs = [
            TreeRecord(r.tree_id, r.lat, r.lon, SPECIES_MIX[j % len(SPECIES_MIX)], float(rng.uniform(3.0, 25.0)))
            for j, r in enumerate(recs)
        ]
        sites.append(SiteDefinition(f"site{k + 1}", poly, recs, area))
    return sites


def polygon_feature(site_def, **props):
    ring = [list(p) for p in site_def.boundary.exterior]
    ring.append(ring[0])
    return {
        "type": "Feature",
        "properties": {"site_id": site_def.site_id, "declared_area_ha": site_def.declared_area_ha, **props},
        "geometry": {"type": "Polygon", "coordinates": [ring]},
    }


def write_bundle(root, n_pixels=120, trees_scale=0.1, broken_site=None):
    """Write sites.geojson, one field CSV per site and raster.asc under ``root``.

    ``broken_site`` (1-based) gets a self-intersecting polygon.
    """
    import json
    from pathlib import Path

    from carbon_audit.fielddata import serialize_field_csv
    from carbon_audit.raster import write_esri_ascii

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    sites = bundle_sites(trees_scale=trees_scale)
    feats = []
    for k, s in enumerate(sites, start=1):
        feat = polygon_feature(s)
        if k == broken_site:
            ring = feat["geometry"]["coordinates"][0]
            ring[1], ring[2] = ring[2], ring[1]
        feats.append(feat)
        (root / f"{s.site_id}.csv").write_text(serialize_field_csv(s.records), encoding="utf-8")
    (root / "sites.geojson").write_text(json.dumps({"type": "FeatureCollection", "features": feats}), encoding="utf-8")
    grid = grid_around(-80.45, -1.2, n_pixels, smooth_field)
    (root / "raster.asc").write_text(write_esri_ascii(grid), encoding="utf-8")
    return {
        "sites": root / "sites.geojson",
        "field": [root / f"{s.site_id}.csv" for s in sites],
        "raster": root / "raster.asc",
    }
