"""
Text processing analyzer.

Answers: which terms does a tweet actually contain?
Cleans tweet text (boilerplate, mentions, URLs, alias mapping), tokenizes
without lemmatisation, selects bi/tri-gram collocations per month with PMI and
frequency cumulative-mass cutoffs, and segments documents into final terms.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from spatiotemporal.data_access import TweetType
from spatiotemporal.errors import ConfigError, EmptyScores, ZeroCount

NGram = tuple[str, ...]
Tokenizer = Callable[[str], list[str]]   # any text -> tokens callable can replace tokenize

_JOINER = "_"
_MAX_CLEAN_PASSES = 10

_MENTION = re.compile(r"(?<![\w@])@\w+:?")
_RT_MARKER = re.compile(r"^\s*RT\b:?")
_URL = re.compile(r"(?<!\S)(?:https?://\S+|(?:t\.co|bit\.ly|goo\.gl|tinyurl\.com|ow\.ly)/\S+)",
                  re.IGNORECASE)
_WHITESPACE = re.compile(r"\s+")
# Hashtags stay whole; apostrophes only join letters inside a word
_TOKEN = re.compile(r"#?\w+(?:['’]\w+)*")


# ---------------------------------------------------------------------------
# Cleaning rules
# ---------------------------------------------------------------------------

@dataclass
class CleaningRules:
    """
    Boilerplate patterns are literal substrings unless prefixed with "re:".
    Alias keys are matched case-insensitively, with or without a leading "#".
    """

    boilerplate_patterns: list[str] = field(default_factory=list)
    alias_map: dict[str, str] = field(default_factory=dict)
    strip_mentions: bool = True
    strip_urls: bool = True

    def __post_init__(self) -> None:
        self.alias_map = {k.strip().casefold(): v.strip() for k, v in self.alias_map.items()}
        self._boilerplate = [_compile_boilerplate(p) for p in self.boilerplate_patterns]
        self._alias_re = _compile_aliases(self.alias_map)
        if self._alias_re is not None:
            for canonical in self.alias_map.values():
                if canonical.casefold() in self.alias_map or self._alias_re.search(canonical):
                    raise ConfigError(
                        f"alias map is not idempotent: canonical term {canonical!r} "
                        "is itself matched by an alias key"
                    )

    @classmethod
    def from_dict(cls, raw: Mapping) -> "CleaningRules":
        return cls(
            boilerplate_patterns=[str(p) for p in raw.get("boilerplate", [])],
            alias_map={str(k): str(v) for k, v in dict(raw.get("aliases", {})).items()},
            strip_mentions=bool(raw.get("strip_mentions", True)),
            strip_urls=bool(raw.get("strip_urls", True)),
        )


def _compile_boilerplate(pattern: str) -> re.Pattern:
    if pattern.startswith("re:"):
        try:
            return re.compile(pattern[3:])
        except re.error as exc:
            raise ConfigError(f"bad boilerplate regex {pattern!r}: {exc}") from exc
    return re.compile(re.escape(pattern))


def _compile_aliases(alias_map: Mapping[str, str]) -> re.Pattern | None:
    if not alias_map:
        return None
    keys = sorted(alias_map, key=len, reverse=True)
    alternation = "|".join(re.escape(k) for k in keys)
    return re.compile(rf"(?<![\w#@])(#?)({alternation})(?![\w'’-])", re.IGNORECASE)


def _clean_once(text: str, rules: CleaningRules) -> str:
    # boilerplate patterns may contain mentions or URLs
    for pattern in rules._boilerplate:
        text = pattern.sub(" ", text)
    if rules.strip_urls:
        text = _URL.sub(" ", text)
    if rules.strip_mentions:
        text = _RT_MARKER.sub(" ", text)
        text = _MENTION.sub(" ", text)
    if rules._alias_re is not None:
        text = rules._alias_re.sub(
            lambda m: m.group(1) + rules.alias_map[m.group(2).casefold()], text
        )
    return _WHITESPACE.sub(" ", text).strip()


def clean_text(text: str, rules: CleaningRules) -> str:
    """
    Strip boilerplate (in declared order), then URLs and mentions (with a
    leading RT marker), apply the alias map, collapse whitespace. Iterates
    to a fixpoint, so it is idempotent.
    """
    current = text
    for _ in range(_MAX_CLEAN_PASSES):
        cleaned = _clean_once(current, rules)
        if cleaned == current:
            break
        current = cleaned
    return current


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------

def tokenize(text: str) -> list[str]:
    """Lowercased tokens; hashtags and intra-word apostrophes kept, no lemmatisation."""
    return _TOKEN.findall(text.lower())


# ---------------------------------------------------------------------------
# N-gram statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NGramCandidate:
    tokens: NGram
    month: str
    frequency: int
    pmi: float


@dataclass
class MonthCounts:
    month: str
    unigrams: Counter = field(default_factory=Counter)
    ngrams: Counter = field(default_factory=Counter)   # keys are 2- and 3-tuples

    def add(self, tokens: Sequence[str]) -> None:
        self.unigrams.update(tokens)
        for n in (2, 3):
            for i in range(len(tokens) - n + 1):
                self.ngrams[tuple(tokens[i:i + n])] += 1


def build_month_counts(docs: Iterable[tuple[str, Sequence[str]]]) -> dict[str, MonthCounts]:
    """Count unigrams and 2/3-grams per month from (month, tokens) pairs; n-grams never span documents."""
    by_month: dict[str, MonthCounts] = {}
    for month, tokens in docs:
        counts = by_month.get(month)
        if counts is None:
            counts = by_month[month] = MonthCounts(month)
        counts.add(tokens)
    return dict(sorted(by_month.items()))


def compute_pmi(counts: MonthCounts) -> list[NGramCandidate]:
    """
    PMI (natural log) of every 2/3-gram in one month.

    p(ngram) is its count over all n-grams of the same order in the month;
    p(token) is its count over all unigrams in the month.
    """
    total_unigrams = sum(counts.unigrams.values())
    if total_unigrams < 1:
        return []
    totals_by_order: Counter = Counter()
    for gram, c in counts.ngrams.items():
        totals_by_order[len(gram)] += c

    candidates: list[NGramCandidate] = []
    for gram, c in sorted(counts.ngrams.items()):
        p_joint = c / totals_by_order[len(gram)]
        p_indep = 1.0
        for token in gram:
            uc = counts.unigrams.get(token, 0)
            if uc < 1:
                raise ZeroCount(f"{counts.month}: n-gram {' '.join(gram)!r} uses unseen unigram {token!r}")
            p_indep *= uc / total_unigrams
        candidates.append(NGramCandidate(gram, counts.month, int(c), math.log(p_joint / p_indep)))
    return candidates


def mass_threshold_cutoff(
    scores: Sequence[float],
    mass: float,
    shift_to_zero: bool = False,
) -> float:
    """
    Score at the first descending rank whose cumulative normalized mass
    reaches `mass`. With shift_to_zero the mass is computed on scores - min,
    but the returned cutoff is always the original score.
    """
    values = np.asarray(scores, dtype=float)
    if values.size == 0:
        raise EmptyScores("mass_threshold_cutoff needs at least one score")
    if not 0.0 < mass <= 1.0:
        raise ValueError(f"mass must be in (0, 1], got {mass}")

    ordered = np.sort(values)[::-1]
    work = ordered - ordered[-1] if shift_to_zero else ordered
    cumulative = np.cumsum(work)
    total = cumulative[-1]
    if total <= 0.0:
        return float(ordered[-1])
    hits = np.flatnonzero(cumulative >= mass * total)
    idx = int(hits[0]) if hits.size else len(ordered) - 1
    return float(ordered[idx])


# ---------------------------------------------------------------------------
# Vocabulary selection
# ---------------------------------------------------------------------------

@dataclass
class TermVocabulary:
    entries: dict[NGram, tuple[str, ...]] = field(default_factory=dict)   # n-gram -> admitting months

    def __contains__(self, gram: object) -> bool:
        return gram in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def months(self, gram: NGram) -> tuple[str, ...]:
        return self.entries.get(gram, ())


def _admit(pool: Sequence[NGramCandidate], pmi_mass: float, freq_mass: float) -> list[NGramCandidate]:
    if not pool:
        return []
    pmi_cut = mass_threshold_cutoff([c.pmi for c in pool], pmi_mass, shift_to_zero=True)
    freq_cut = mass_threshold_cutoff([c.frequency for c in pool], freq_mass, shift_to_zero=False)
    return [c for c in pool if c.pmi >= pmi_cut and c.frequency >= freq_cut]


def select_vocabulary(
    candidates: Mapping[str, Sequence[NGramCandidate]],
    pmi_mass: float = 0.75,
    freq_mass: float = 0.15,
    pool_orders: bool = False,
) -> TermVocabulary:
    """
    Admit an n-gram for a month iff its PMI and its frequency both reach the
    month's cumulative-mass cutoffs. Bigrams and trigrams form separate
    candidate pools unless pool_orders is set.
    """
    admitted: dict[NGram, set[str]] = {}
    for month in sorted(candidates):
        month_pool = list(candidates[month])
        if pool_orders:
            pools = [month_pool]
        else:
            pools = [[c for c in month_pool if len(c.tokens) == n] for n in (2, 3)]
        for pool in pools:
            for cand in _admit(pool, pmi_mass, freq_mass):
                admitted.setdefault(cand.tokens, set()).add(month)
    return TermVocabulary({gram: tuple(sorted(months)) for gram, months in sorted(admitted.items())})


def save_vocabulary(vocab: TermVocabulary, path: str | Path, header: str | None = None) -> None:
    """Sorted "ngram<TAB>months" text file; n-gram tokens space-separated, months comma-separated."""
    path = Path(path)
    lines = [f"# {header}"] if header else []
    for gram in sorted(vocab.entries):
        lines.append(f"{' '.join(gram)}\t{','.join(vocab.entries[gram])}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_vocabulary(path: str | Path) -> TermVocabulary:
    entries: dict[NGram, tuple[str, ...]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "\t" not in line:
            continue   # header or blank
        gram, _, months = line.partition("\t")
        entries[tuple(gram.split(" "))] = tuple(m for m in months.split(",") if m)
    return TermVocabulary(entries)


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------

def segment_terms(tokens: Sequence[str], vocab: TermVocabulary) -> list[str]:
    """Greedy left-to-right longest match: trigram, then bigram, else the unigram."""
    terms: list[str] = []
    i = 0
    n = len(tokens)
    while i < n:
        for size in (3, 2):
            gram = tuple(tokens[i:i + size])
            if len(gram) == size and gram in vocab:
                terms.append(_JOINER.join(gram))
                i += size
                break
        else:
            terms.append(tokens[i])
            i += 1
    return terms


@dataclass(frozen=True)
class TermDoc:
    record_id: str
    terms: tuple[str, ...]
    region: str
    period: str
    tweet_type: TweetType
    spatial: str | None = None      # Epicentre / Periphery once clusters are known
