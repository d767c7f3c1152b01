"""Field-measurement ingestion and site-level ground-truth AGB density."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from carbon_audit.allometry import FamilyClass, FamilyMapping, classify_family, tree_agb
from carbon_audit.errors import (
    ClassificationError,
    DomainError,
    RowParseError,
    SchemaError,
    ValidationError,
)
from carbon_audit.zonal import GeoPolygon, distance_to_polygon_m, polygon_area_ha

REQUIRED_COLUMNS = ("tree_id", "lat", "lon", "species", "dbh_cm")
OPTIONAL_COLUMNS = ("family", "height_m")
BOUNDARY_TOLERANCE_M = 10.0
KG_PER_TONNE = 1000.0


@dataclass(frozen=True)
class TreeRecord:
    tree_id: str
    lat: float
    lon: float
    species: str
    dbh_cm: float
    family: Optional[FamilyClass] = None
    height_m: Optional[float] = None

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValidationError(f"tree {self.tree_id!r}: latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValidationError(f"tree {self.tree_id!r}: longitude {self.lon} outside [-180, 180]")
        if not (math.isfinite(self.dbh_cm) and self.dbh_cm > 0):
            raise ValidationError(f"tree {self.tree_id!r}: dbh_cm must be > 0, got {self.dbh_cm}")
        if self.height_m is not None and not (math.isfinite(self.height_m) and self.height_m > 0):
            raise ValidationError(f"tree {self.tree_id!r}: height_m must be > 0, got {self.height_m}")

    def resolve_family(self, mapping: FamilyMapping | None = None) -> FamilyClass:
        if self.family is not None:
            return self.family
        return classify_family(self.species, mapping)


@dataclass(frozen=True)
class SiteDefinition:
    site_id: str
    boundary: GeoPolygon
    records: tuple[TreeRecord, ...]
    declared_area_ha: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if self.declared_area_ha is not None and not self.declared_area_ha > 0:
            raise ValidationError(f"site {self.site_id!r}: declared_area_ha must be > 0")

    def boundary_warnings(self, tolerance_m: float = BOUNDARY_TOLERANCE_M) -> list[str]:
        """One warning per record lying more than ``tolerance_m`` outside the boundary."""
        out = []
        for rec in self.records:
            d = distance_to_polygon_m(self.boundary, rec.lon, rec.lat)
            if d > tolerance_m:
                out.append(f"tree {rec.tree_id!r} lies {d:.1f} m outside the site boundary")
        return out


@dataclass(frozen=True)
class SiteGroundTruth:
    site_id: str
    total_agb_t: float
    per_family_totals: dict[FamilyClass, float]
    area_ha: Optional[float] = None
    density_t_per_ha: Optional[float] = None
    warnings: tuple[str, ...] = field(default=())


def _parse_float(text: str, column: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise RowParseError(line, f"column {column!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise RowParseError(line, f"column {column!r}: non-finite value {text!r}")
    return value


def parse_field_csv(text: str | bytes) -> list[TreeRecord]:
    """Parse field measurements into records, preserving file order.

    Columns are matched by header name. Empty optional cells become ``None``.

    Raises:
        SchemaError: A required column is missing.
        RowParseError: A cell cannot be parsed; carries the 1-based line number.
        ValidationError: Duplicate ``tree_id`` values.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    text = text.lstrip("﻿")
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("empty field CSV: header row missing") from None
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise SchemaError(f"field CSV is missing required column {col!r}")
    if len(set(header)) != len(header):
        raise SchemaError("field CSV header repeats a column")
    # unrecognised columns (e.g. an appended agb_kg) are ignored
    pos = {name: k for k, name in enumerate(header) if name in REQUIRED_COLUMNS + OPTIONAL_COLUMNS}

    records: list[TreeRecord] = []
    seen: dict[str, int] = {}
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise RowParseError(line, f"expected {len(header)} fields, found {len(row)}")
        cells = {name: row[k].strip() for name, k in pos.items()}
        tree_id = cells["tree_id"]
        if not tree_id:
            raise RowParseError(line, "empty tree_id")
        if not cells["species"]:
            raise RowParseError(line, "empty species")
        family = None
        if cells.get("family"):
            try:
                family = FamilyClass.parse(cells["family"])
            except ValueError as exc:
                raise RowParseError(line, str(exc)) from None
        height = _parse_float(cells["height_m"], "height_m", line) if cells.get("height_m") else None
        try:
            rec = TreeRecord(
                tree_id=tree_id,
                lat=_parse_float(cells["lat"], "lat", line),
                lon=_parse_float(cells["lon"], "lon", line),
                species=cells["species"],
                dbh_cm=_parse_float(cells["dbh_cm"], "dbh_cm", line),
                family=family,
                height_m=height,
            )
        except ValidationError as exc:
            raise RowParseError(line, str(exc)) from None
        if tree_id in seen:
            raise ValidationError(f"duplicate tree_id {tree_id!r} on lines {seen[tree_id]} and {line}")
        seen[tree_id] = line
        records.append(rec)
    return records


def read_field_csv(path: str | Path) -> list[TreeRecord]:
    return parse_field_csv(Path(path).read_bytes())


def serialize_field_csv(records, extra_columns: dict[str, list[str]] | None = None) -> str:
    """Write records back to the canonical CSV layout (LF line endings).

    Optional columns are emitted only when some record uses them.
    ``extra_columns`` appends pre-formatted columns (e.g. computed AGB).
    """
    records = list(records)
    cols = list(REQUIRED_COLUMNS)
    if any(r.family is not None for r in records):
        cols.append("family")
    if any(r.height_m is not None for r in records):
        cols.append("height_m")
    extra = extra_columns or {}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols + list(extra))
    for k, r in enumerate(records):
        row = [r.tree_id, repr(r.lat), repr(r.lon), r.species, repr(r.dbh_cm)]
        if "family" in cols:
            row.append(r.family.value if r.family else "")
        if "height_m" in cols:
            row.append(repr(r.height_m) if r.height_m is not None else "")
        row.extend(values[k] for values in extra.values())
        writer.writerow(row)
    return buf.getvalue()


def site_total_agb(
    site: SiteDefinition,
    mapping: FamilyMapping | None = None,
    agb_fn: Callable = tree_agb,
) -> SiteGroundTruth:
    """Sum per-tree AGB (converted to tonnes) over every record of the site.

    Records are accumulated in ``tree_id`` order with exactly rounded
    summation, so totals do not depend on input order.
    """
    if not site.records:
        raise ValidationError(f"site {site.site_id!r} has no tree records")
    per_tree: list[tuple[str, FamilyClass, float]] = []
    notes: list[str] = []
    for rec in sorted(site.records, key=lambda r: r.tree_id):
        try:
            family = rec.resolve_family(mapping)
        except ClassificationError as exc:
            raise ClassificationError(rec.species, f"tree {rec.tree_id!r}: {exc}") from None
        result = agb_fn(family, rec.dbh_cm, record_id=rec.tree_id)
        per_tree.append((rec.tree_id, family, result.agb_kg / KG_PER_TONNE))
        notes.extend(result.warnings)
    total = math.fsum(t for _, _, t in per_tree)
    per_family = {
        fam: math.fsum(t for _, f, t in per_tree if f is fam)
        for fam in FamilyClass
        if any(f is fam for _, f, _ in per_tree)
    }
    return SiteGroundTruth(site.site_id, total, per_family, warnings=tuple(notes))


def ground_truth_density(total_agb_t: float, area_ha: float) -> float:
    """Ground-truth AGB density (t/ha)."""
    if not (math.isfinite(area_ha) and area_ha > 0):
        raise DomainError(f"area_ha must be > 0, got {area_ha!r}")
    return total_agb_t / area_ha


def site_ground_truth(site: SiteDefinition, mapping: FamilyMapping | None = None) -> SiteGroundTruth:
    """Total AGB plus density over the polygon-derived site area."""
    gt = site_total_agb(site, mapping)
    area = polygon_area_ha(site.boundary)
    return SiteGroundTruth(
        site_id=gt.site_id,
        total_agb_t=gt.total_agb_t,
        per_family_totals=gt.per_family_totals,
        area_ha=area,
        density_t_per_ha=ground_truth_density(gt.total_agb_t, area),
        warnings=gt.warnings,
    )
