"""
Location normalization analyzer.

Answers: where did a tweet come from?
Maps self-reported user locations to fine Italian regions through a
hand-curated gazetteer and aggregates them into NUTS supra-regions
(North-East and North-West merged into North, plus a generic Italy bucket).

Matching is exact after case/diacritic folding, then per comma component.
Nothing is guessed: unmatched or ambiguous strings stay Unmapped.
"""

from __future__ import annotations

import csv
import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import pandas as pd

from spatiotemporal.errors import ConfigError, UnknownRegion

logger = logging.getLogger(__name__)

UNMAPPED = "Unmapped"
ITALY_GENERIC = "Italy"
SUPRA_REGIONS = ("North", "Centre", "South", "Islands", "Italy")

# NUTS-1 labels folded onto the five supra-regions used downstream
_SUPRA_ALIASES = {
    "north": "North",
    "north-east": "North",
    "north east": "North",
    "northeast": "North",
    "north-west": "North",
    "north west": "North",
    "northwest": "North",
    "centre": "Centre",
    "center": "Centre",
    "south": "South",
    "islands": "Islands",
    "italy": "Italy",
}


def fold(text: str) -> str:
    """Casefold, strip diacritics, collapse whitespace."""
    decomposed = unicodedata.normalize("NFKD", text)
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return " ".join(stripped.casefold().split())


@dataclass(frozen=True)
class NormalizedLocation:
    fine_region: str = UNMAPPED
    supra_region: str = UNMAPPED

    @property
    def is_mapped(self) -> bool:
        return self.fine_region != UNMAPPED


_UNMAPPED_LOCATION = NormalizedLocation()


@dataclass
class RegionHierarchy:
    gazetteer: dict[str, str] = field(default_factory=dict)          # folded raw -> fine region
    fine_to_supra: dict[str, str] = field(default_factory=dict)      # fine region -> supra region
    ambiguous: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for fine, supra in self.fine_to_supra.items():
            if supra not in SUPRA_REGIONS:
                raise ConfigError(f"fine region {fine!r} maps to unknown supra-region {supra!r}")
        for raw, fine in self.gazetteer.items():
            if fine not in self.fine_to_supra:
                raise ConfigError(f"gazetteer entry {raw!r} points at unknown region {fine!r}")
        self.gazetteer = {fold(k): v for k, v in self.gazetteer.items()}
        # Region names resolve to themselves so normalization is idempotent
        for fine in self.fine_to_supra:
            self.gazetteer.setdefault(fold(fine), fine)

    @property
    def fine_regions(self) -> list[str]:
        return sorted(self.fine_to_supra)


def load_hierarchy(gazetteer_path: str | Path, supra_path: str | Path) -> RegionHierarchy:
    """
    Read the two tab-separated tables:
        supra table:  fine-region<TAB>supra-region (NUTS labels allowed)
        gazetteer:    raw-location<TAB>fine-region
    A raw location listed with two different regions is recorded as ambiguous.
    """
    fine_to_supra: dict[str, str] = {}
    for fine, supra in _read_pairs(supra_path):
        mapped = _SUPRA_ALIASES.get(fold(supra))
        if mapped is None:
            raise ConfigError(f"{supra_path}: unknown supra-region {supra!r} for {fine!r}")
        fine_to_supra[fine] = mapped

    gazetteer: dict[str, str] = {}
    seen: dict[str, set[str]] = {}
    for raw, fine in _read_pairs(gazetteer_path):
        key = fold(raw)
        seen.setdefault(key, set()).add(fine)
        gazetteer[key] = fine
    ambiguous = {k: tuple(sorted(v)) for k, v in seen.items() if len(v) > 1}
    for key in ambiguous:
        del gazetteer[key]
    if ambiguous:
        logger.warning("gazetteer: %d ambiguous location string(s) will stay Unmapped", len(ambiguous))
    return RegionHierarchy(gazetteer=gazetteer, fine_to_supra=fine_to_supra, ambiguous=ambiguous)


def _read_pairs(path: str | Path) -> list[tuple[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"region table not found: {path}")
    rows: list[tuple[str, str]] = []
    with path.open(encoding="utf-8", newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE), start=1):
            if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
                continue
            if len(row) < 2 or not row[1].strip():
                raise ConfigError(f"{path}:{line_no}: expected two tab-separated columns")
            rows.append((row[0].strip(), row[1].strip()))
    return rows


# ---------------------------------------------------------------------------
# Lookups
# ---------------------------------------------------------------------------

def aggregate_region(fine: str, h: RegionHierarchy) -> str:
    """Supra-region of a fine region; UnknownRegion means the tables are inconsistent."""
    try:
        return h.fine_to_supra[fine]
    except KeyError:
        raise UnknownRegion(f"fine region {fine!r} is not in the region hierarchy") from None


def normalize_location(raw: str, h: RegionHierarchy) -> NormalizedLocation:
    """
    Exact folded lookup first, then comma components. A specific region beats
    the generic Italy bucket; components naming two different specific regions
    are ambiguous and stay Unmapped.
    """
    key = fold(raw or "")
    if not key:
        return _UNMAPPED_LOCATION
    if key in h.ambiguous:
        logger.warning("ambiguous location %r -> %s; left Unmapped", raw, h.ambiguous[key])
        return _UNMAPPED_LOCATION

    fine = h.gazetteer.get(key)
    if fine is None and "," in key:
        fine = _match_components(key, h)
    if fine is None:
        return _UNMAPPED_LOCATION
    return NormalizedLocation(fine, aggregate_region(fine, h))


def _match_components(key: str, h: RegionHierarchy) -> str | None:
    specific: list[str] = []
    generic = False
    for part in (p.strip() for p in key.split(",")):
        if not part or part in h.ambiguous:
            continue
        fine = h.gazetteer.get(part)
        if fine is None:
            continue
        if fine == ITALY_GENERIC:
            generic = True
        elif fine not in specific:
            specific.append(fine)
    if len(specific) > 1:
        logger.warning("ambiguous location %r matches %s; left Unmapped", key, specific)
        return None
    if specific:
        return specific[0]
    return ITALY_GENERIC if generic else None


def normalize_locations(raws: Iterable[str], h: RegionHierarchy) -> list[NormalizedLocation]:
    """Normalize many strings, resolving each distinct string once."""
    cache: dict[str, NormalizedLocation] = {}
    out: list[NormalizedLocation] = []
    for raw in raws:
        loc = cache.get(raw)
        if loc is None:
            loc = cache[raw] = normalize_location(raw, h)
        out.append(loc)
    return out


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def supra_shares(locations: Iterable[NormalizedLocation]) -> pd.DataFrame:
    """
    Count and share of mapped records per supra-region, plus the Unmapped count.

    Shares are over mapped records only; counts of all rows add up to the corpus size.
    """
    counts = Counter(loc.supra_region for loc in locations)
    mapped_total = sum(c for k, c in counts.items() if k != UNMAPPED)
    rows = []
    for supra in (*SUPRA_REGIONS, UNMAPPED):
        n = counts.get(supra, 0)
        share = (n / mapped_total) if supra != UNMAPPED and mapped_total else float("nan")
        rows.append({"supra_region": supra, "count": n, "share": share})
    return pd.DataFrame(rows)


def report_unmapped(raws: Iterable[str], h: RegionHierarchy, top: int = 20) -> list[tuple[str, int]]:
    """Most frequent raw strings that did not map, for gazetteer curation."""
    raws = list(raws)
    counts: Counter = Counter(
        raw.strip() for raw, loc in zip(raws, normalize_locations(raws, h))
        if not loc.is_mapped and raw.strip()
    )
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top]
