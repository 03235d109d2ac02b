"""
Synthetic corpus generator.

Produces a tweet corpus with known answers, for tests and demos:
  - mapped, in-window records split exactly 36/24/24/10/6 % over the
    North/Italy/Centre/South/Islands supra-regions ("Italy" holds the
    region-less strings);
  - early-peak daily activity for epicentre regions, late-peak for periphery;
  - one exclusive term per (period, spatial cluster) cell, posted by original
    tweets of that cell only;
  - extra unmapped, duplicated and out-of-window records that ingest and
    geonorm must discard.

The raw location strings used here all resolve through the gazetteer shipped
in data/fixtures/.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from spatiotemporal.analyzers.salience import cell_label
from spatiotemporal.analyzers.temporal import EPICENTRE, PERIPHERY, PeriodConfig, assign_period
from spatiotemporal.data_access import TweetRecord, TweetType, as_utc_datetime, write_records

logger = logging.getLogger(__name__)

SUPRA_SHARES = {"North": 36, "Italy": 24, "Centre": 24, "South": 10, "Islands": 6}

# fine region -> (supra region, spatial cluster, weight within supra, raw location strings)
REGIONS: dict[str, tuple[str, str, int, tuple[str, ...]]] = {
    "Lombardia": ("North", EPICENTRE, 30, ("Milano", "Milano, Lombardia", "Bergamo", "Brescia, Italia", "Lombardia")),
    "Veneto": ("North", EPICENTRE, 15, ("Venezia", "Padova", "Verona, Veneto")),
    "Emilia-Romagna": ("North", EPICENTRE, 15, ("Bologna", "Modena", "Emilia Romagna")),
    "Piemonte": ("North", EPICENTRE, 14, ("Torino", "Piemonte")),
    "Liguria": ("North", EPICENTRE, 8, ("Genova", "Liguria")),
    "Friuli-Venezia Giulia": ("North", PERIPHERY, 7, ("Trieste", "Udine")),
    "Trentino-Alto Adige": ("North", PERIPHERY, 7, ("Trento", "Bolzano")),
    "Valle d'Aosta": ("North", PERIPHERY, 4, ("Aosta",)),
    "Lazio": ("Centre", EPICENTRE, 45, ("Roma", "Rome, Italy", "Lazio")),
    "Toscana": ("Centre", EPICENTRE, 30, ("Firenze", "Pisa", "Toscana")),
    "Marche": ("Centre", PERIPHERY, 14, ("Ancona", "Marche")),
    "Umbria": ("Centre", PERIPHERY, 11, ("Perugia", "Umbria")),
    "Campania": ("South", PERIPHERY, 35, ("Napoli", "Napoli, Campania", "Salerno")),
    "Puglia": ("South", PERIPHERY, 25, ("Bari", "Lecce", "Puglia")),
    "Calabria": ("South", PERIPHERY, 12, ("Reggio Calabria", "Cosenza")),
    "Abruzzo": ("South", PERIPHERY, 9, ("Pescara", "L'Aquila")),
    "South": ("South", PERIPHERY, 9, ("Sud Italia", "Meridione")),
    "Basilicata": ("South", PERIPHERY, 6, ("Potenza", "Basilicata")),
    "Molise": ("South", PERIPHERY, 4, ("Campobasso",)),
    "Sicilia": ("Islands", PERIPHERY, 70, ("Palermo", "Catania", "Sicilia")),
    "Sardegna": ("Islands", PERIPHERY, 30, ("Cagliari", "Sassari", "Sardegna")),
    "Italy": ("Italy", EPICENTRE, 1, ("Italia", "Italy")),
}

UNMAPPED_LOCATIONS = ("Paris, France", "London", "Earth", "ovunque", "", "Europe", "New York")

COLLOCATIONS = (
    "zona rossa",
    "protezione civile",
    "restate a casa",
    "terapia intensiva",
    "bollettino della protezione civile",
    "andra tutto bene",
)

_SYLLABLES = ("ba", "ce", "di", "fo", "gu", "la", "me", "ni", "po", "ru",
              "sa", "te", "vi", "zo", "ca", "le", "mi", "no", "pa", "ro")
_PEAK_WEIGHT = 8.0
_DAY_SECONDS = 86_400


@dataclass(frozen=True)
class SyntheticPlan:
    n_mapped: int = 100_000
    unmapped_fraction: float = 0.05
    duplicate_fraction: float = 0.01
    out_of_window_fraction: float = 0.01
    retweet_fraction: float = 0.3
    planted_fraction: float = 0.3
    collocation_fraction: float = 0.2
    vocabulary_size: int = 300
    seed: int = 0
    periods: PeriodConfig = field(default_factory=PeriodConfig)


def planted_term(period: str, spatial: str) -> str:
    return f"segnale{period}{spatial}".lower()


def planted_terms(periods: PeriodConfig) -> dict[str, str]:
    """Cell label ("Period|Spatial") -> the term planted exclusively in that cell."""
    return {
        cell_label(p, s): planted_term(p, s)
        for p in periods.names for s in (PERIPHERY, EPICENTRE)
    }


def planned_spatial() -> dict[str, str]:
    return {region: spec[1] for region, spec in REGIONS.items()}


def allocate(total: int, weights) -> list[int]:
    """Split total into integer parts proportional to weights (largest remainder)."""
    w = np.asarray(list(weights), dtype=float)
    exact = total * w / w.sum()
    parts = np.floor(exact).astype(int)
    short = total - int(parts.sum())
    # Stable order keeps the split reproducible when remainders tie
    for i in np.argsort(-(exact - parts), kind="stable")[:short]:
        parts[i] += 1
    return parts.tolist()


def expected_supra_counts(plan: SyntheticPlan) -> dict[str, int]:
    return dict(zip(SUPRA_SHARES, allocate(plan.n_mapped, SUPRA_SHARES.values())))


def expected_region_counts(plan: SyntheticPlan) -> dict[str, int]:
    counts: dict[str, int] = {}
    for supra, n in expected_supra_counts(plan).items():
        members = [r for r, spec in REGIONS.items() if spec[0] == supra]
        counts.update(zip(members, allocate(n, (REGIONS[r][2] for r in members))))
    return counts


def _filler_vocabulary(size: int) -> list[str]:
    rng = np.random.default_rng(12345)
    pool = sorted({a + b + c for a in _SYLLABLES for b in _SYLLABLES for c in _SYLLABLES})
    return sorted(rng.choice(pool, size=size, replace=False).tolist())


def _day_shape(days: list[datetime], plan: SyntheticPlan, spatial: str) -> np.ndarray:
    """Daily probabilities: epicentre peaks over Initial+Northern, periphery over National."""
    if spatial == EPICENTRE:
        lo = plan.periods.bounds("Initial")[0]
        hi = plan.periods.bounds("Northern")[1]
    else:
        lo, hi = plan.periods.bounds("National")
    lo_dt, hi_dt = as_utc_datetime(lo), as_utc_datetime(hi)
    weights = np.array([_PEAK_WEIGHT if lo_dt <= d < hi_dt else 1.0 for d in days])
    return weights / weights.sum()


class _TextMaker:
    def __init__(self, rng: np.random.Generator, plan: SyntheticPlan) -> None:
        self.rng = rng
        self.plan = plan
        self.words = np.array(_filler_vocabulary(plan.vocabulary_size))
        ranks = np.arange(1, len(self.words) + 1, dtype=float)
        self.probs = (1.0 / ranks) / (1.0 / ranks).sum()

    def filler(self) -> str:
        n = int(self.rng.integers(5, 10))
        tokens = self.rng.choice(self.words, size=n, p=self.probs).tolist()
        if self.rng.random() < self.plan.collocation_fraction:
            at = int(self.rng.integers(0, n + 1))
            tokens.insert(at, COLLOCATIONS[int(self.rng.integers(0, len(COLLOCATIONS)))])
        return " ".join(tokens)

    def original(self, planted: str | None, record_id: str) -> str:
        if planted is not None:
            return f"{planted} https://t.co/{record_id}"
        return self.filler()

    def retweet(self) -> str:
        return f"RT @utente{int(self.rng.integers(1, 500))}: {self.filler()}"


def generate_corpus(plan: SyntheticPlan | None = None) -> list[TweetRecord]:
    """All records of the plan, including the ones ingest is expected to discard, in shuffled order."""
    plan = plan or SyntheticPlan()
    rng = np.random.default_rng(plan.seed)
    text = _TextMaker(rng, plan)
    periods = plan.periods

    start = as_utc_datetime(periods.start)
    n_days = (periods.end - periods.start).days
    days = [start + timedelta(days=i) for i in range(n_days)]
    shapes = {s: _day_shape(days, plan, s) for s in (EPICENTRE, PERIPHERY)}

    records: list[TweetRecord] = []

    def add(created_at: datetime, body: str, location: str, retweet: bool) -> None:
        records.append(TweetRecord(
            id=f"syn{len(records):07d}",
            created_at=created_at,
            text=body,
            user_location=location,
            tweet_type=TweetType.RETWEET if retweet else TweetType.ORIGINAL,
            lang="it",
        ))

    for region, n in expected_region_counts(plan).items():
        _, spatial, _, raws = REGIONS[region]
        day_idx = rng.choice(n_days, size=n, p=shapes[spatial])
        seconds = rng.integers(0, _DAY_SECONDS, size=n)
        retweet = rng.random(n) < plan.retweet_fraction
        plant = rng.random(n) < plan.planted_fraction
        raw_idx = rng.integers(0, len(raws), size=n)
        for d, s, rt, pl, ri in zip(day_idx, seconds, retweet, plant, raw_idx):
            created_at = days[d] + timedelta(seconds=int(s))
            if rt:
                body = text.retweet()
            else:
                term = planted_term(assign_period(created_at, periods), spatial) if pl else None
                body = text.original(term, f"{len(records):07d}")
            add(created_at, body, raws[ri], bool(rt))

    n_unmapped = round(plan.n_mapped * plan.unmapped_fraction)
    for _ in range(n_unmapped):
        created_at = days[int(rng.integers(0, n_days))] + timedelta(seconds=int(rng.integers(0, _DAY_SECONDS)))
        location = UNMAPPED_LOCATIONS[int(rng.integers(0, len(UNMAPPED_LOCATIONS)))]
        add(created_at, text.filler(), location, False)

    n_outside = round(plan.n_mapped * plan.out_of_window_fraction)
    end = as_utc_datetime(periods.end)
    for i in range(n_outside):
        offset = timedelta(days=int(rng.integers(1, 25)), seconds=int(rng.integers(0, _DAY_SECONDS)))
        created_at = start - offset if i % 2 == 0 else end + offset
        add(created_at, text.filler(), "Milano", False)

    n_dupes = round(plan.n_mapped * plan.duplicate_fraction)
    dupes = [records[i] for i in sorted(rng.choice(plan.n_mapped, size=n_dupes, replace=False))]
    corpus = records + dupes
    order = rng.permutation(len(corpus))
    logger.info(
        "synthetic corpus: %d mapped, %d unmapped, %d outside window, %d duplicates",
        plan.n_mapped, n_unmapped, n_outside, n_dupes,
    )
    return [corpus[i] for i in order]


def write_corpus(path: str | Path, plan: SyntheticPlan | None = None, shards: int = 1) -> list[Path]:
    """Write the corpus as `shards` JSONL files named <stem>-NN.jsonl (or just path when shards=1)."""
    records = generate_corpus(plan)
    path = Path(path)
    if shards <= 1:
        write_records(records, path)
        return [path]
    written = []
    for k in range(shards):
        shard = path.with_name(f"{path.stem}-{k:02d}{path.suffix}")
        write_records(records[k::shards], shard)
        written.append(shard)
    return written
