"""Static SVG heatmap of an AGB raster with site and crown overlays.

Colours follow a linear RGB ramp from ``RAMP_LOW`` (grid minimum) to
``RAMP_HIGH`` (grid maximum); nodata cells are drawn in ``NODATA_FILL``.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from carbon_audit.errors import RenderError
from carbon_audit.raster import GeoGrid, world_to_pixel
from carbon_audit.zonal import GeoPolygon

RAMP_LOW = (255, 255, 204)
RAMP_HIGH = (0, 104, 55)
NODATA_FILL = "#bdbdbd"
CANVAS_PX = 600
LEGEND_PX = 40


def ramp_color(t: float) -> str:
    t = min(1.0, max(0.0, t))
    rgb = (round(lo + (hi - lo) * t) for lo, hi in zip(RAMP_LOW, RAMP_HIGH))
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _fmt(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def render_heatmap_svg(grid: GeoGrid, poly: GeoPolygon, crowns=None) -> str:
    """Deterministic SVG text for ``grid`` with ``poly`` outlined.

    Each raster cell becomes one ``<rect class="cell">``; the site is one
    ``<path class="site">``; crowns become ``<rect class="crown">``.
    """
    bb = poly.bbox
    if not (bb.max_lon > bb.min_lon and bb.max_lat > bb.min_lat):
        raise RenderError("polygon has a degenerate extent")
    values = grid.values
    valid = ~grid.nodata_mask & np.isfinite(values)
    if not valid.any():
        raise RenderError("grid has no valid cells to render")
    vmin, vmax = float(values[valid].min()), float(values[valid].max())
    span = vmax - vmin

    scale = CANVAS_PX / max(grid.ncols, grid.nrows)
    width, height = grid.ncols * scale, grid.nrows * scale
    out = [
        '<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{_fmt(width)}" height="{_fmt(height + LEGEND_PX)}" '
        f'viewBox="0 0 {_fmt(width)} {_fmt(height + LEGEND_PX)}">',
        '<g class="raster" shape-rendering="crispEdges">',
    ]
    for r in range(grid.nrows):
        for c in range(grid.ncols):
            if valid[r, c]:
                fill = ramp_color((values[r, c] - vmin) / span if span > 0 else 0.0)
            else:
                fill = NODATA_FILL
            out.append(
                f'<rect class="cell" x="{_fmt(c * scale)}" y="{_fmt(r * scale)}" '
                f'width="{_fmt(scale)}" height="{_fmt(scale)}" fill="{fill}"/>'
            )
    out.append("</g>")

    def to_canvas(lon, lat):
        pc = world_to_pixel(grid, lon, lat)
        return _fmt(pc.col * scale), _fmt(pc.row * scale)

    for k, ring in enumerate(poly.rings):
        pts = [to_canvas(x, y) for x, y in ring]
        d = "M " + " L ".join(f"{x} {y}" for x, y in pts) + " Z"
        cls = "site" if k == 0 else "site-hole"
        out.append(f'<path class="{cls}" d="{d}" fill="none" stroke="#d7301f" stroke-width="2"/>')

    for crown in sorted(crowns or (), key=lambda c: c.crown_id):
        x0, y0 = world_to_pixel(grid, crown.min_lon, crown.max_lat)
        x1, y1 = world_to_pixel(grid, crown.max_lon, crown.min_lat)
        out.append(
            f'<rect class="crown" data-crown-id="{escape(crown.crown_id, {chr(34): "&quot;"})}" '
            f'x="{_fmt(x0 * scale)}" y="{_fmt(y0 * scale)}" '
            f'width="{_fmt((x1 - x0) * scale)}" height="{_fmt((y1 - y0) * scale)}" '
            'fill="none" stroke="#2b8cbe" stroke-width="1"/>'
        )

    ty = height + LEGEND_PX / 2
    out.append(
        f'<text class="legend" x="4" y="{_fmt(ty)}" font-family="sans-serif" font-size="12">'
        f"min {vmin:.2f} t/ha ({ramp_color(0.0)})  max {vmax:.2f} t/ha ({ramp_color(1.0)})</text>"
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"
