"""Audit satellite forest-carbon estimates against field-measured ground truth."""

from carbon_audit.allometry import FamilyClass, FamilyMapping, TreeAgb, tree_agb
from carbon_audit.audit import AuditConfig, AuditReport, SiteResult, run_audit, run_site_audit
from carbon_audit.crownmatch import CrownBox, MatchResult, match_records_to_crowns
from carbon_audit.fielddata import SiteDefinition, TreeRecord, parse_field_csv
from carbon_audit.raster import GeoGrid, bicubic_sample, parse_esri_ascii, parse_geotiff_subset, read_raster, regrid
from carbon_audit.zonal import GeoPolygon, ZonalResult, polygon_area_ha, zonal_filtered_mean

__version__ = "0.1.0"

__all__ = [
    "AuditConfig",
    "AuditReport",
    "CrownBox",
    "FamilyClass",
    "FamilyMapping",
    "GeoGrid",
    "GeoPolygon",
    "MatchResult",
    "SiteDefinition",
    "SiteResult",
    "TreeAgb",
    "TreeRecord",
    "ZonalResult",
    "bicubic_sample",
    "match_records_to_crowns",
    "parse_esri_ascii",
    "parse_field_csv",
    "parse_geotiff_subset",
    "read_raster",
    "polygon_area_ha",
    "regrid",
    "run_audit",
    "run_site_audit",
    "tree_agb",
    "zonal_filtered_mean",
]
