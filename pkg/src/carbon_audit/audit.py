"""Site and batch audits: ground truth vs polygon-filtered raster estimate."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Optional

from carbon_audit.allometry import FamilyMapping
from carbon_audit.errors import BatchError, CarbonAuditError, DomainError
from carbon_audit.fielddata import SiteDefinition, site_ground_truth
from carbon_audit.raster import KERNEL_NAME, GeoGrid
from carbon_audit.zonal import ZonalResult, zonal_filtered_mean

TOOL_NAME = "carbon-audit"
THREADS_ENV = "CARBON_AUDIT_THREADS"
CSV_COLUMNS = ("site_id", "ground_truth_t_ha", "filtered_t_ha", "overestimation_factor", "factor_rounded")
# declared vs polygon area mismatch that earns a warning
AREA_MISMATCH_REL = 0.10


def overestimation_factor(filtered: float, ground_truth: float) -> float:
    if not (math.isfinite(ground_truth) and ground_truth > 0):
        raise DomainError(f"ground truth density must be > 0, got {ground_truth!r}")
    if not (math.isfinite(filtered) and filtered >= 0):
        raise DomainError(f"filtered density must be >= 0, got {filtered!r}")
    return filtered / ground_truth


def round_half_away(x: float, places: int = 1) -> float:
    """Round the shortest decimal form of ``x`` half away from zero."""
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(x)).quantize(q, rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class AuditConfig:
    target_pixel_m: float = 1.0
    cap_m: float = 3.0
    mapping: Optional[FamilyMapping] = None
    threads: Optional[int] = None
    input_digests: dict[str, str] = field(default_factory=dict)
    include_timestamp: bool = False

    def __post_init__(self):
        for name in ("target_pixel_m", "cap_m"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive, got {v!r}")
        if self.threads is not None and self.threads < 1:
            raise DomainError(f"threads must be >= 1, got {self.threads}")

    def worker_count(self, n_sites: int) -> int:
        threads = self.threads
        if threads is None:
            env = os.environ.get(THREADS_ENV, "").strip()
            threads = int(env) if env else os.cpu_count() or 1
        return max(1, min(threads, n_sites))


@dataclass(frozen=True)
class SiteResult:
    site_id: str
    ground_truth_t_ha: float
    filtered_t_ha: float
    overestimation_factor: float
    factor_rounded: float
    zonal: ZonalResult
    total_agb_t: float
    area_ha: float
    declared_area_ha: Optional[float]
    n_records: int
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class SiteFailure:
    site_id: str
    error: str


@dataclass(frozen=True)
class AuditReport:
    results: tuple[SiteResult, ...]
    failures: tuple[SiteFailure, ...]
    metadata: dict

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "sites": [asdict(r) for r in self.results],
            "failures": [asdict(f) for f in self.failures],
        }

    def to_json(self) -> str:
        """Canonical JSON: sorted keys, fixed indentation, trailing newline."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.results:
            writer.writerow(
                [r.site_id, repr(r.ground_truth_t_ha), repr(r.filtered_t_ha), repr(r.overestimation_factor), f"{r.factor_rounded:.1f}"]
            )
        return buf.getvalue()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def run_site_audit(site: SiteDefinition, grid: GeoGrid, config: AuditConfig | None = None) -> SiteResult:
    """Ground truth, filtered raster mean and their ratio for one site."""
    config = config or AuditConfig()
    site.boundary.validate()
    gt = site_ground_truth(site, config.mapping)
    zonal = zonal_filtered_mean(grid, site.boundary, config.target_pixel_m)
    factor = overestimation_factor(zonal.mean_t_per_ha, gt.density_t_per_ha)

    notes = list(site.boundary_warnings())
    notes.extend(gt.warnings)
    if zonal.nodata_count:
        notes.append(f"{zonal.nodata_count} interpolated cell(s) inside the polygon are nodata and were excluded")
    if site.declared_area_ha is not None:
        rel = abs(gt.area_ha - site.declared_area_ha) / site.declared_area_ha
        if rel > AREA_MISMATCH_REL:
            notes.append(
                f"polygon area {gt.area_ha:.4f} ha differs from declared {site.declared_area_ha:g} ha "
                f"by {100 * rel:.1f}%; polygon area used"
            )
    return SiteResult(
        site_id=site.site_id,
        ground_truth_t_ha=gt.density_t_per_ha,
        filtered_t_ha=zonal.mean_t_per_ha,
        overestimation_factor=factor,
        factor_rounded=round_half_away(factor, 1),
        zonal=zonal,
        total_agb_t=gt.total_agb_t,
        area_ha=gt.area_ha,
        declared_area_ha=site.declared_area_ha,
        n_records=len(site.records),
        warnings=tuple(notes),
    )


def _version() -> str:
    from carbon_audit import __version__

    return __version__


def run_audit(
    sites,
    grid: GeoGrid,
    config: AuditConfig | None = None,
    failures=(),
) -> AuditReport:
    """Audit every site; a failing site is recorded without stopping the rest.

    ``failures`` lets callers carry forward sites that already failed while
    loading, as ``(site_id, message)`` pairs. Results keep input order.

    Raises:
        BatchError: No site produced a result.
    """
    config = config or AuditConfig()
    sites = list(sites)
    pre_failed = [SiteFailure(sid, msg) for sid, msg in failures]
    if not sites and not pre_failed:
        raise DomainError("run_audit needs at least one site")

    def one(site):
        try:
            return run_site_audit(site, grid, config)
        except CarbonAuditError as exc:
            return SiteFailure(site.site_id, f"{type(exc).__name__}: {exc}")

    if sites:
        with ThreadPoolExecutor(max_workers=config.worker_count(len(sites))) as pool:
            outcomes = list(pool.map(one, sites))
    else:
        outcomes = []
    results = tuple(o for o in outcomes if isinstance(o, SiteResult))
    failed = tuple(pre_failed) + tuple(o for o in outcomes if isinstance(o, SiteFailure))
    if not results:
        raise BatchError([(f.site_id, f.error) for f in failed])

    metadata = {
        "tool": TOOL_NAME,
        "tool_version": _version(),
        "kernel": KERNEL_NAME,
        "edge_policy": "clamp",
        "cell_inclusion": "pixel-centre-in-polygon",
        "area_method": "local-equirectangular",
        "target_pixel_m": config.target_pixel_m,
        "cap_m": config.cap_m,
        "input_digests": dict(sorted(config.input_digests.items())),
    }
    if config.include_timestamp:
        from datetime import datetime, timezone

        metadata["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return AuditReport(results=results, failures=failed, metadata=metadata)
