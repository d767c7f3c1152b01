"""``carbon-audit`` command-line interface.

Exit codes: 0 success, 1 fatal or usage error, 2 audit finished with some
sites failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from carbon_audit import __version__
from carbon_audit.allometry import FamilyClass, FamilyMapping, tree_agb
from carbon_audit.audit import AuditConfig, file_digest, run_audit
from carbon_audit.crownmatch import match_records_to_crowns, match_to_csv, per_crown_agb, read_crowns
from carbon_audit.errors import BatchError, CarbonAuditError
from carbon_audit.fielddata import SiteDefinition, read_field_csv, serialize_field_csv
from carbon_audit.raster import read_raster, regrid
from carbon_audit.render import render_heatmap_svg
from carbon_audit.zonal import GeoPolygon, metres_to_degrees

log = logging.getLogger("carbon_audit")

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_FATAL, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    target_pixel_m: float = 1.0
    cap_m: float = 3.0
    family_map: Optional[str] = None
    out: str = "."
    formats: str = "both"
    render: bool = False
    threads: Optional[int] = None
    allow_multipolygon: bool = False
    extra: dict = field(default_factory=dict)


_CONFIG_TYPES = {
    "target_pixel_m": float,
    "cap_m": float,
    "family_map": str,
    "out": str,
    "formats": str,
    "render": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
    "threads": int,
    "allow_multipolygon": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
}


def load_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    settings = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_TYPES:
            raise UsageError(f"{path}:{lineno}: unknown setting {key!r}")
        try:
            settings[key] = _CONFIG_TYPES[key](value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
    return settings


def resolve_config(args) -> RunConfig:
    """Flags override the config file, which overrides defaults."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        for key, value in load_config_file(args.config).items():
            setattr(cfg, key, value)
    for key in _CONFIG_TYPES:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if cfg.target_pixel_m <= 0 or cfg.cap_m <= 0:
        raise UsageError("target_pixel_m and cap_m must be positive")
    if cfg.threads is not None and cfg.threads < 1:
        raise UsageError("threads must be >= 1")
    if cfg.formats not in ("json", "csv", "both"):
        raise UsageError(f"formats must be json, csv or both, got {cfg.formats!r}")
    return cfg


def _mapping(cfg: RunConfig) -> Optional[FamilyMapping]:
    if not cfg.family_map:
        return None
    try:
        return FamilyMapping.from_file(cfg.family_map)
    except OSError as exc:
        raise CarbonAuditError(f"cannot read family mapping {cfg.family_map}: {exc.strerror}") from None
    except ValueError as exc:
        raise CarbonAuditError(f"{cfg.family_map}: {exc}") from None


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CarbonAuditError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CarbonAuditError(f"{path}: invalid JSON ({exc})") from None


def _load_raster(path):
    try:
        return read_raster(path)
    except OSError as exc:
        raise CarbonAuditError(f"cannot read raster {path}: {exc.strerror}") from None
    except CarbonAuditError as exc:
        raise CarbonAuditError(f"raster {path}: {exc}") from None


def site_features(doc) -> list[dict]:
    if doc.get("type") == "FeatureCollection":
        return list(doc.get("features") or [])
    if doc.get("type") == "Feature":
        return [doc]
    raise CarbonAuditError("sites file must be a GeoJSON Feature or FeatureCollection")


def load_sites(sites_path, field_paths, allow_multipolygon=False):
    """Pair site polygons with field CSVs.

    A feature's CSV is named by its ``field`` property, else found by
    matching the CSV file stem to ``site_id``. Returns ``(sites, failures)``;
    per-site problems become failures rather than aborting.
    """
    features = site_features(_read_json(sites_path))
    by_stem = {}
    for p in field_paths:
        p = Path(p)
        if not p.is_file():
            raise CarbonAuditError(f"cannot read field CSV {p}: no such file")
        by_stem[p.stem] = p
    by_name = {p.name: p for p in by_stem.values()}

    sites, failures, used = [], [], set()
    for k, feat in enumerate(features):
        props = feat.get("properties") or {}
        site_id = str(props.get("site_id", f"site_{k + 1}"))
        try:
            ref = props.get("field")
            csv_path = by_name.get(Path(ref).name) if ref else by_stem.get(site_id)
            if csv_path is None:
                raise CarbonAuditError(f"no field CSV supplied for site {site_id!r}")
            used.add(csv_path)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                boundary = GeoPolygon.from_geojson(feat.get("geometry") or {}, allow_multipolygon)
            declared = props.get("declared_area_ha", props.get("plot_area_ha"))
            sites.append(
                SiteDefinition(
                    site_id,
                    boundary,
                    read_field_csv(csv_path),
                    None if declared is None else float(declared),
                )
            )
        except CarbonAuditError as exc:
            failures.append((site_id, f"{type(exc).__name__}: {exc}"))
    for p in sorted(set(by_stem.values()) - used):
        log.warning("field CSV %s matches no site", p)
    return sites, failures


def _add_config_flags(p, *, cap=False, pixel=False):
    p.add_argument("--config", metavar="FILE", help="key=value settings file (flags take precedence)")
    if pixel:
        p.add_argument("--target-pixel-m", dest="target_pixel_m", type=float, metavar="M",
                       help="interpolation cell size in metres (default 1.0)")
    if cap:
        p.add_argument("--cap-m", dest="cap_m", type=float, metavar="M",
                       help="maximum tree-to-crown distance in metres (default 3.0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="carbon-audit", description="Audit satellite AGB estimates against field plots.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("audit", help="compare ground truth with the filtered raster estimate per site")
    p.add_argument("--sites", required=True, metavar="GEOJSON", help="site polygons (FeatureCollection)")
    p.add_argument("--field", required=True, nargs="+", metavar="CSV", help="field measurement CSV(s)")
    p.add_argument("--raster", required=True, metavar="PATH", help="AGB density raster (.tif or .asc)")
    p.add_argument("--out", metavar="DIR", help="output directory (default .)")
    p.add_argument("--format", dest="formats", choices=("json", "csv", "both"), help="report format(s) (default both)")
    p.add_argument("--family-map", dest="family_map", metavar="FILE", help="species keyword=Family overrides")
    p.add_argument("--render", action="store_true", default=None, help="also write one SVG heatmap per site")
    p.add_argument("--threads", type=int, metavar="N", help="concurrent sites (default $CARBON_AUDIT_THREADS or CPU count)")
    p.add_argument("--allow-multipolygon", dest="allow_multipolygon", action="store_true", default=None,
                   help="accept MultiPolygon sites, keeping the first part")
    p.add_argument("--timestamp", action="store_true", help="add a generation timestamp to report metadata")
    _add_config_flags(p, cap=True, pixel=True)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("allometry", help="per-tree AGB (kg) from DBH")
    p.add_argument("--family", metavar="CLASS", help="one of: " + ", ".join(f.value.lower() for f in FamilyClass))
    p.add_argument("--dbh", type=float, metavar="CM", help="diameter at breast height in cm")
    p.add_argument("--field", metavar="CSV", help="batch mode: append an agb_kg column to this CSV")
    p.add_argument("--family-map", dest="family_map", metavar="FILE", help="species keyword=Family overrides")
    p.add_argument("--out", metavar="FILE", help="batch output file (default stdout)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_allometry)

    p = sub.add_parser("match", help="assign field trees to detected crowns")
    p.add_argument("--field", required=True, metavar="CSV", help="field measurement CSV")
    p.add_argument("--crowns", required=True, metavar="PATH", help="crown boxes (.csv or .geojson)")
    p.add_argument("--out", metavar="DIR", help="output directory (default .)")
    p.add_argument("--family-map", dest="family_map", metavar="FILE", help="species keyword=Family overrides")
    p.add_argument("--with-agb", action="store_true", help="also write crown_agb.csv")
    _add_config_flags(p, cap=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("render", help="SVG heatmap of the interpolated raster over one site")
    p.add_argument("--raster", required=True, metavar="PATH", help="AGB density raster (.tif or .asc)")
    p.add_argument("--sites", required=True, metavar="GEOJSON", help="site polygons")
    p.add_argument("--site-id", metavar="ID", help="site to draw (default: first feature)")
    p.add_argument("--crowns", metavar="PATH", help="optional crown boxes to overlay")
    p.add_argument("--out", required=True, metavar="FILE", help="output SVG path")
    p.add_argument("--allow-multipolygon", dest="allow_multipolygon", action="store_true", default=None,
                   help="accept MultiPolygon sites, keeping the first part")
    _add_config_flags(p, pixel=True)
    p.set_defaults(func=cmd_render)
    return parser


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _site_svg(grid, poly, target_pixel_m, crowns=None) -> str:
    _, lat0 = poly.centroid
    fine = regrid(grid, metres_to_degrees(target_pixel_m, lat0), poly.bbox)
    return render_heatmap_svg(fine, poly, crowns)


def cmd_audit(args) -> int:
    cfg = resolve_config(args)
    mapping = _mapping(cfg)
    grid = _load_raster(args.raster)
    sites, failures = load_sites(args.sites, args.field, cfg.allow_multipolygon)

    digests = {"raster/" + Path(args.raster).name: file_digest(args.raster),
               "sites/" + Path(args.sites).name: file_digest(args.sites)}
    for p in args.field:
        digests["field/" + Path(p).name] = file_digest(p)
    if cfg.family_map:
        digests["family_map/" + Path(cfg.family_map).name] = file_digest(cfg.family_map)

    audit_cfg = AuditConfig(
        target_pixel_m=cfg.target_pixel_m,
        cap_m=cfg.cap_m,
        mapping=mapping,
        threads=cfg.threads,
        input_digests=digests,
        include_timestamp=bool(args.timestamp),
    )
    try:
        report = run_audit(sites, grid, audit_cfg, failures=failures)
    except BatchError as exc:
        print(f"carbon-audit: {exc}", file=sys.stderr)
        return EXIT_FATAL

    out = Path(cfg.out)
    if cfg.formats in ("json", "both"):
        _write(out / "report.json", report.to_json())
    if cfg.formats in ("csv", "both"):
        _write(out / "report.csv", report.to_csv())
    if cfg.render:
        polys = {s.site_id: s.boundary for s in sites}
        for r in report.results:
            _write(out / f"site_{r.site_id}.svg", _site_svg(grid, polys[r.site_id], cfg.target_pixel_m))

    for r in report.results:
        print(f"{r.site_id}: ground truth {r.ground_truth_t_ha:.2f} t/ha, "
              f"filtered {r.filtered_t_ha:.2f} t/ha, x{r.factor_rounded:.1f}")
        for w in r.warnings:
            log.warning("%s: %s", r.site_id, w)
    for f in report.failures:
        print(f"{f.site_id}: FAILED {f.error}", file=sys.stderr)
    return EXIT_PARTIAL if report.failures else EXIT_OK


def cmd_allometry(args) -> int:
    cfg = resolve_config(args)
    if args.field:
        if args.family or args.dbh is not None:
            raise UsageError("--field cannot be combined with --family/--dbh")
        mapping = _mapping(cfg)
        try:
            records = read_field_csv(args.field)
        except OSError as exc:
            raise CarbonAuditError(f"cannot read field CSV {args.field}: {exc.strerror}") from None
        agb = [repr(tree_agb(r.resolve_family(mapping), r.dbh_cm, r.tree_id).agb_kg) for r in records]
        text = serialize_field_csv(records, {"agb_kg": agb})
        if args.out:
            _write(Path(args.out), text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    if not args.family or args.dbh is None:
        raise UsageError("give --family and --dbh, or --field for batch mode")
    try:
        family = FamilyClass.parse(args.family)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = tree_agb(family, args.dbh)
    print(repr(result.agb_kg))
    for w in result.warnings:
        log.warning("%s", w)
    return EXIT_OK


def cmd_match(args) -> int:
    cfg = resolve_config(args)
    try:
        records = read_field_csv(args.field)
        crowns = read_crowns(args.crowns)
    except OSError as exc:
        raise CarbonAuditError(f"cannot read {exc.filename}: {exc.strerror}") from None
    match = match_records_to_crowns(records, crowns, cfg.cap_m)
    out = Path(cfg.out)
    _write(out / "matches.csv", match_to_csv(match))
    lines = ["kind,id"]
    lines += [f"record,{t}" for t in match.unmatched_records]
    lines += [f"crown,{c}" for c in match.unmatched_crowns]
    _write(out / "unmatched.csv", "\n".join(lines) + "\n")
    if args.with_agb:
        rows = ["crown_id,agb_kg"] + [f"{c},{a!r}" for c, a in per_crown_agb(match, records, _mapping(cfg))]
        _write(out / "crown_agb.csv", "\n".join(rows) + "\n")
    print(f"matched {len(match.pairs)} tree(s); {len(match.unmatched_records)} tree(s) and "
          f"{len(match.unmatched_crowns)} crown(s) unmatched; total distance {match.total_distance_m:.3f} m")
    return EXIT_OK


def cmd_render(args) -> int:
    cfg = resolve_config(args)
    grid = _load_raster(args.raster)
    features = site_features(_read_json(args.sites))
    if not features:
        raise CarbonAuditError(f"{args.sites} contains no sites")
    chosen = features[0]
    if args.site_id is not None:
        matches = [f for f in features if str((f.get("properties") or {}).get("site_id")) == args.site_id]
        if not matches:
            raise CarbonAuditError(f"site {args.site_id!r} not found in {args.sites}")
        chosen = matches[0]
    poly = GeoPolygon.from_geojson(chosen.get("geometry") or {}, bool(cfg.allow_multipolygon)).validate()
    crowns = None
    if args.crowns:
        try:
            crowns = read_crowns(args.crowns)
        except OSError as exc:
            raise CarbonAuditError(f"cannot read crowns {args.crowns}: {exc.strerror}") from None
    _write(Path(args.out), _site_svg(grid, poly, cfg.target_pixel_m, crowns))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"carbon-audit: error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except CarbonAuditError as exc:
        print(f"carbon-audit: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
