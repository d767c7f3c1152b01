"""Exception hierarchy shared by all modules."""


class CarbonAuditError(Exception):
    """Base class for every error raised by this package."""


class DomainError(CarbonAuditError, ValueError):
    """A numeric argument lies outside the domain of the operation."""


class ClassificationError(CarbonAuditError):
    """A species could not be resolved to an allometry family."""

    def __init__(self, species, reason="no mapping rule matches"):
        self.species = species
        super().__init__(f"cannot classify species {species!r}: {reason}")


class SchemaError(CarbonAuditError):
    """An input table lacks a required column or has a malformed header."""


class RowParseError(CarbonAuditError):
    """A single data row could not be parsed."""

    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ValidationError(CarbonAuditError):
    """Parsed data violates a semantic invariant."""


class ParseError(CarbonAuditError):
    """A raster file is malformed."""


class UnsupportedFormatError(CarbonAuditError):
    """A file uses a feature outside the supported subset."""


class OutOfBoundsError(CarbonAuditError):
    """A sample location falls outside the raster extent."""


class GeometryError(CarbonAuditError):
    """A polygon is degenerate or otherwise invalid."""


class UnsupportedExtentError(GeometryError):
    """A polygon is too large for the local planar approximation."""


class EmptyZoneError(CarbonAuditError):
    """No raster cell centre falls inside the polygon."""


class NodataZoneError(CarbonAuditError):
    """Every cell inside the polygon is nodata."""


class RenderError(CarbonAuditError):
    """A figure cannot be rendered from the given inputs."""


class BatchError(CarbonAuditError):
    """Every site of a batch audit failed."""

    def __init__(self, failures):
        self.failures = failures
        detail = "; ".join(f"{sid}: {msg}" for sid, msg in failures)
        super().__init__(f"all {len(failures)} site(s) failed: {detail}")
