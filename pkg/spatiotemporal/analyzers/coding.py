"""
Term coding analyzer.

Answers: what kind of discourse do the top terms belong to?
Maps terms to one of ten hand-curated categories through a codebook file
and summarizes coded term lists as category ratios.

Ratios are kept as exact fractions; only display strings are rounded
(half-up, two decimals).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import pandas as pd

from spatiotemporal.errors import ConfigError, EmptyInput

logger = logging.getLogger(__name__)


class TermCategory(str, Enum):
    ITALY = "Italy"
    EXTERNAL = "External"
    EVENT = "Event"
    SOLIDARITY = "Solidarity"
    SPREAD = "Spread"
    POLICY = "Policy"
    PERSON = "Person"
    NEWS = "News"
    FOOTBALL = "Football"
    UNCODED = "Uncoded"

    @classmethod
    def parse(cls, name: str) -> "TermCategory":
        wanted = name.strip().casefold()
        for member in cls:
            if member.value.casefold() == wanted:
                return member
        raise ValueError(f"unknown term category {name!r}")


_CATEGORY_ORDER = {c: i for i, c in enumerate(TermCategory)}


class Convention(str, Enum):
    INCLUDE_UNCODED = "include_uncoded"
    EXCLUDE_UNCODED = "exclude_uncoded"


CodedTerm = tuple[str, TermCategory]


def term_key(term: str) -> str:
    """Codebook lookup key: casefolded, inner whitespace joined with "_" like segmented n-grams."""
    return "_".join(term.casefold().split())


# ---------------------------------------------------------------------------
# Codebook
# ---------------------------------------------------------------------------

@dataclass
class Codebook:
    entries: dict[str, TermCategory] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.entries = {term_key(t): TermCategory(c) for t, c in self.entries.items()}

    def __len__(self) -> int:
        return len(self.entries)

    def category(self, term: str) -> TermCategory:
        return self.entries.get(term_key(term), TermCategory.UNCODED)


def load_codebook(path: str | Path) -> Codebook:
    """Read "term<TAB>category" lines; '#' comments and blank lines are ignored."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"codebook not found: {path}")
    entries: dict[str, TermCategory] = {}
    with path.open(encoding="utf-8", newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE), start=1):
            if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
                continue
            if len(row) < 2:
                raise ConfigError(f"{path}:{line_no}: expected term<TAB>category")
            try:
                category = TermCategory.parse(row[1])
            except ValueError as exc:
                raise ConfigError(f"{path}:{line_no}: {exc}") from None
            key = term_key(row[0])
            if key in entries and entries[key] is not category:
                raise ConfigError(f"{path}:{line_no}: {row[0]!r} coded twice with different categories")
            entries[key] = category
    return Codebook(entries)


def apply_codebook(terms: Iterable[str], codebook: Codebook) -> list[CodedTerm]:
    return [(t, codebook.category(t)) for t in terms]


# ---------------------------------------------------------------------------
# Ratios
# ---------------------------------------------------------------------------

def round_half_up(value: Fraction, decimals: int = 2) -> str:
    """Exact decimal string of value rounded half-up."""
    scale = 10 ** decimals
    n = math.floor(value * scale + Fraction(1, 2))
    if decimals == 0:
        return str(n)
    return f"{n // scale}.{n % scale:0{decimals}d}"


@dataclass(frozen=True)
class RatioTable:
    scope: str
    convention: Convention
    counts: dict[TermCategory, int]
    total: int

    @property
    def uncoded(self) -> int:
        return self.counts.get(TermCategory.UNCODED, 0)

    @property
    def denominator(self) -> int:
        if self.convention is Convention.EXCLUDE_UNCODED:
            return self.total - self.uncoded
        return self.total

    @property
    def ratios(self) -> dict[TermCategory, Fraction]:
        """Displayed categories (coded, non-zero) sorted by descending ratio, ties in category order."""
        denom = self.denominator
        if denom == 0:
            return {}
        coded = [(c, n) for c, n in self.counts.items() if c is not TermCategory.UNCODED and n > 0]
        coded.sort(key=lambda cn: (-cn[1], _CATEGORY_ORDER[cn[0]]))
        return {c: Fraction(n, denom) for c, n in coded}

    def display(self, decimals: int = 2) -> list[tuple[str, str]]:
        return [(c.value, round_half_up(r, decimals)) for c, r in self.ratios.items()]

    def display_text(self, decimals: int = 2, sep: str = ", ") -> str:
        return sep.join(f"{name}:{value}" for name, value in self.display(decimals))


def category_ratios(
    coded_lists: Sequence[Sequence[CodedTerm]],
    convention: Convention | str = Convention.INCLUDE_UNCODED,
    scope: str = "",
) -> RatioTable:
    """Pool every coded list of one row or column and count terms per category."""
    convention = Convention(convention)
    counts: dict[TermCategory, int] = {}
    total = 0
    for coded in coded_lists:
        for _, category in coded:
            counts[category] = counts.get(category, 0) + 1
            total += 1
    if total == 0:
        raise EmptyInput(f"no coded terms for ratio scope {scope!r}")
    table = RatioTable(scope=scope, convention=convention, counts=counts, total=total)
    if table.denominator == 0:
        logger.warning("ratios for %r: every term is uncoded, nothing to display", scope)
    return table


def ratio_frame(tables: Iterable[RatioTable], decimals: int = 2) -> pd.DataFrame:
    """ratios.csv layout: scope, category, count, denominator, ratio, display, convention."""
    rows = []
    for table in tables:
        for category, ratio in table.ratios.items():
            rows.append({
                "scope": table.scope,
                "category": category.value,
                "count": table.counts[category],
                "denominator": table.denominator,
                "ratio": float(ratio),
                "display": round_half_up(ratio, decimals),
                "convention": table.convention.value,
            })
    columns = ["scope", "category", "count", "denominator", "ratio", "display", "convention"]
    return pd.DataFrame(rows, columns=columns)
