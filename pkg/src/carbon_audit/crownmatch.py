"""One-to-one assignment of field-measured trees to detected crown boxes."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from carbon_audit.allometry import FamilyMapping, tree_agb
from carbon_audit.errors import ClassificationError, DomainError, SchemaError, ValidationError
from carbon_audit.zonal import project_local

DEFAULT_CAP_M = 3.0


@dataclass(frozen=True)
class CrownBox:
    crown_id: str
    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float
    confidence: Optional[float] = None

    def __post_init__(self):
        if not (self.min_lon < self.max_lon and self.min_lat < self.max_lat):
            raise ValidationError(f"crown {self.crown_id!r}: min must be < max on both axes")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"crown {self.crown_id!r}: confidence {self.confidence} outside [0, 1]")

    @property
    def centroid(self) -> tuple[float, float]:
        return (0.5 * (self.min_lon + self.max_lon), 0.5 * (self.min_lat + self.max_lat))


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[str, str, float], ...]
    unmatched_records: tuple[str, ...]
    unmatched_crowns: tuple[str, ...]
    total_distance_m: float


def distance_matrix(records, crowns) -> np.ndarray:
    """Pairwise record-to-crown-centre distances in metres.

    Points are projected about the mean of all record and crown centres.
    """
    lons = [r.lon for r in records] + [c.centroid[0] for c in crowns]
    lats = [r.lat for r in records] + [c.centroid[1] for c in crowns]
    lon0 = math.fsum(lons) / len(lons)
    lat0 = math.fsum(lats) / len(lats)
    x, y = project_local(lons, lats, lon0, lat0)
    n = len(records)
    rx, ry = x[:n], y[:n]
    cx, cy = x[n:], y[n:]
    return np.hypot(rx[:, None] - cx[None, :], ry[:, None] - cy[None, :])


def match_records_to_crowns(records, crowns, cap_m: float = DEFAULT_CAP_M) -> MatchResult:
    """Maximum-cardinality, minimum-total-distance matching under a distance cap.

    Pairs farther apart than ``cap_m`` are forbidden. Among matchings of
    maximum size the one with the smallest summed distance is returned.
    Inputs are sorted by id first so the result does not depend on order.
    """
    if not (math.isfinite(cap_m) and cap_m > 0):
        raise DomainError(f"cap_m must be positive, got {cap_m!r}")
    records = sorted(records, key=lambda r: r.tree_id)
    crowns = sorted(crowns, key=lambda c: c.crown_id)
    for kind, ids in (("tree_id", [r.tree_id for r in records]), ("crown_id", [c.crown_id for c in crowns])):
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate {kind} in matching input")
    if not records or not crowns:
        return MatchResult((), tuple(r.tree_id for r in records), tuple(c.crown_id for c in crowns), 0.0)

    dist = distance_matrix(records, crowns)
    allowed = dist <= cap_m
    # every real match is worth more than any possible distance saving
    bonus = cap_m * (min(dist.shape) + 1)
    cost = np.where(allowed, dist - bonus, 0.0)
    rows, cols = linear_sum_assignment(cost)

    pairs = []
    used_r, used_c = set(), set()
    for i, j in zip(rows.tolist(), cols.tolist()):
        if allowed[i, j]:
            pairs.append((records[i].tree_id, crowns[j].crown_id, float(dist[i, j])))
            used_r.add(i)
            used_c.add(j)
    pairs.sort()
    return MatchResult(
        pairs=tuple(pairs),
        unmatched_records=tuple(r.tree_id for k, r in enumerate(records) if k not in used_r),
        unmatched_crowns=tuple(c.crown_id for k, c in enumerate(crowns) if k not in used_c),
        total_distance_m=math.fsum(d for _, _, d in pairs),
    )


def per_crown_agb(match: MatchResult, records, mapping: FamilyMapping | None = None) -> list[tuple[str, float]]:
    """AGB (kg) of the tree matched to each crown, sorted by crown id."""
    by_id = {r.tree_id: r for r in records}
    out = []
    for tree_id, crown_id, _ in match.pairs:
        rec = by_id[tree_id]
        try:
            family = rec.resolve_family(mapping)
            agb = tree_agb(family, rec.dbh_cm, record_id=tree_id).agb_kg
        except DomainError as exc:
            raise DomainError(f"crown {crown_id!r} (tree {tree_id!r}): {exc}") from None
        except ClassificationError as exc:
            raise ClassificationError(rec.species, f"crown {crown_id!r} (tree {tree_id!r}): {exc}") from None
        out.append((crown_id, agb))
    out.sort()
    return out


def parse_crowns_csv(text: str | bytes) -> list[CrownBox]:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    reader = csv.DictReader(io.StringIO(text.lstrip("﻿"), newline=""))
    fields = [f.strip() for f in (reader.fieldnames or [])]
    if not fields:
        return []
    reader.fieldnames = fields
    for col in ("crown_id", "min_lon", "min_lat", "max_lon", "max_lat"):
        if col not in fields:
            raise SchemaError(f"crown CSV is missing required column {col!r}")
    crowns = []
    for row in reader:
        try:
            conf = (row.get("confidence") or "").strip()
            crowns.append(
                CrownBox(
                    row["crown_id"].strip(),
                    float(row["min_lon"]),
                    float(row["min_lat"]),
                    float(row["max_lon"]),
                    float(row["max_lat"]),
                    float(conf) if conf else None,
                )
            )
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"crown CSV line {reader.line_num}: {exc}") from None
    return crowns


def parse_crowns_geojson(text: str | bytes) -> list[CrownBox]:
    """Read a FeatureCollection of rectangles carrying a ``crown_id`` property."""
    doc = json.loads(text)
    if doc.get("type") != "FeatureCollection":
        raise SchemaError("crown GeoJSON must be a FeatureCollection")
    crowns = []
    for k, feat in enumerate(doc.get("features", [])):
        props = feat.get("properties") or {}
        if "crown_id" not in props:
            raise SchemaError(f"crown feature {k} lacks a 'crown_id' property")
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Polygon":
            raise SchemaError(f"crown feature {k}: expected Polygon geometry")
        ring = geom["coordinates"][0]
        xs = [float(p[0]) for p in ring]
        ys = [float(p[1]) for p in ring]
        conf = props.get("confidence")
        crowns.append(
            CrownBox(str(props["crown_id"]), min(xs), min(ys), max(xs), max(ys), None if conf is None else float(conf))
        )
    return crowns


def read_crowns(path: str | Path) -> list[CrownBox]:
    path = Path(path)
    data = path.read_bytes()
    if path.suffix.lower() in (".geojson", ".json"):
        return parse_crowns_geojson(data)
    return parse_crowns_csv(data)


def match_to_csv(match: MatchResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["tree_id", "crown_id", "distance_m"])
    for tree_id, crown_id, d in match.pairs:
        writer.writerow([tree_id, crown_id, repr(d)])
    return buf.getvalue()
