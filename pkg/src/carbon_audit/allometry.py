"""Family-level allometric equations for tropical agroforestry.

Per-tree aboveground biomass (kg) from diameter at breast height (cm) for
four equation families: fruit trees, bananas (Musaceae), cacao, and shade
timber.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from carbon_audit.errors import ClassificationError, DomainError

# Timber quadratic has its minimum at 6.95 / (2 * 0.74) cm; values below
# this DBH are flagged rather than clamped.
SMALL_TIMBER_DBH_CM = 5.0

_FRUIT_INTERCEPT = -0.834
_FRUIT_SLOPE = 2.223
_MUSACEA_COEF, _MUSACEA_EXP = 0.030, 2.13
_CACAO_COEF, _CACAO_EXP = 0.1208, 1.98
_TIMBER_A, _TIMBER_B, _TIMBER_C = 21.3, -6.95, 0.74


class FamilyClass(enum.Enum):
    FRUIT = "Fruit"
    MUSACEA = "Musacea"
    CACAO = "Cacao"
    TIMBER = "Timber"

    @classmethod
    def parse(cls, text: str) -> "FamilyClass":
        """Resolve a family name case-insensitively.

        Raises:
            ValueError: If ``text`` does not name one of the four classes.
        """
        key = text.strip().lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        valid = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown family {text!r}; valid classes: {valid}")


def _check_dbh(dbh_cm: float) -> float:
    dbh = float(dbh_cm)
    if not math.isfinite(dbh) or dbh <= 0.0:
        raise DomainError(f"dbh_cm must be finite and > 0, got {dbh_cm!r}")
    return dbh


def agb_fruit(dbh_cm: float) -> float:
    """AGB (kg) of a fruit tree: ``10 ** (-0.834 + 2.223 * log10(dbh))``."""
    dbh = _check_dbh(dbh_cm)
    return 10.0 ** (_FRUIT_INTERCEPT + _FRUIT_SLOPE * math.log10(dbh))


def agb_musacea(dbh_cm: float) -> float:
    """AGB (kg) of a banana plant: ``0.030 * dbh ** 2.13``."""
    dbh = _check_dbh(dbh_cm)
    return _MUSACEA_COEF * dbh**_MUSACEA_EXP


def agb_cacao(dbh_cm: float) -> float:
    """AGB (kg) of a cacao plant: ``0.1208 * dbh ** 1.98``."""
    dbh = _check_dbh(dbh_cm)
    return _CACAO_COEF * dbh**_CACAO_EXP


def agb_timber(dbh_cm: float) -> float:
    """AGB (kg) of a shade/timber tree: ``21.3 - 6.95 * dbh + 0.74 * dbh ** 2``.

    Evaluated as written for every positive DBH; the curve is not monotone
    below ~4.7 cm.
    """
    dbh = _check_dbh(dbh_cm)
    return _TIMBER_A + _TIMBER_B * dbh + _TIMBER_C * dbh * dbh


EQUATIONS = {
    FamilyClass.FRUIT: agb_fruit,
    FamilyClass.MUSACEA: agb_musacea,
    FamilyClass.CACAO: agb_cacao,
    FamilyClass.TIMBER: agb_timber,
}


@dataclass(frozen=True)
class TreeAgb:
    record_id: str
    family: FamilyClass
    dbh_cm: float
    agb_kg: float
    warnings: tuple[str, ...] = ()


def tree_agb(family: FamilyClass, dbh_cm: float, record_id: str = "") -> TreeAgb:
    """Dispatch a single tree to its family equation."""
    agb = EQUATIONS[family](dbh_cm)
    notes: tuple[str, ...] = ()
    if family is FamilyClass.TIMBER and dbh_cm < SMALL_TIMBER_DBH_CM:
        label = f"tree {record_id!r}" if record_id else "tree"
        notes = (
            f"{label}: timber DBH {dbh_cm:g} cm < {SMALL_TIMBER_DBH_CM:g} cm, "
            "equation is non-monotonic in this range",
        )
    return TreeAgb(record_id=record_id, family=family, dbh_cm=float(dbh_cm), agb_kg=agb, warnings=notes)


DEFAULT_KEYWORDS = {
    "musaceae": FamilyClass.MUSACEA,
    "musa": FamilyClass.MUSACEA,
    "banana": FamilyClass.MUSACEA,
    "cacao": FamilyClass.CACAO,
    "cocoa": FamilyClass.CACAO,
    "theobroma": FamilyClass.CACAO,
}

_TOKEN = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class FamilyMapping:
    """Keyword table resolving free-text species names to families.

    User overrides are consulted before the built-in defaults. Lookup first
    tries the whole (lower-cased) species string, then each alphanumeric
    word in it.
    """

    overrides: dict[str, FamilyClass] = field(default_factory=dict)
    defaults: dict[str, FamilyClass] = field(default_factory=lambda: dict(DEFAULT_KEYWORDS))

    @classmethod
    def from_text(cls, text: str) -> "FamilyMapping":
        rules: dict[str, FamilyClass] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"mapping line {lineno}: expected 'keyword=FamilyClass', got {raw!r}")
            keyword, family = (part.strip() for part in line.split("=", 1))
            if not keyword:
                raise ValueError(f"mapping line {lineno}: empty keyword")
            try:
                rules[keyword.lower()] = FamilyClass.parse(family)
            except ValueError as exc:
                raise ValueError(f"mapping line {lineno}: {exc}") from None
        return cls(overrides=rules)

    @classmethod
    def from_file(cls, path: str | Path) -> "FamilyMapping":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def classify(self, species_text: str) -> FamilyClass:
        return classify_family(species_text, self)


def _lookup(table: dict[str, FamilyClass], whole: str, tokens: list[str], species: str):
    if whole in table:
        return table[whole]
    hits = {table[t] for t in tokens if t in table}
    if len(hits) > 1:
        names = ", ".join(sorted(h.value for h in hits))
        raise ClassificationError(species, f"ambiguous, keywords match {names}")
    return hits.pop() if hits else None


def classify_family(species_text: str, mapping: FamilyMapping | None = None) -> FamilyClass:
    """Resolve ``species_text`` to a family; never falls back to a default."""
    if species_text is None or not species_text.strip():
        raise ClassificationError(species_text or "", "empty species name")
    mapping = mapping or FamilyMapping()
    whole = species_text.strip().lower()
    tokens = _TOKEN.findall(whole)
    for table in (mapping.overrides, mapping.defaults):
        family = _lookup(table, whole, tokens, species_text)
        if family is not None:
            return family
    raise ClassificationError(species_text)
