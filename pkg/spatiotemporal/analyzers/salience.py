"""
Salience analyzer.

Answers: which terms are characteristic of a spatio-temporal slice?
Counts terms per document category (original tweets only), then ranks
them one-vs-rest by scaled F-score: the harmonic mean of the normal-CDF
transformed precision and recall of each term for the focal category.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Literal, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.stats import norm
from sklearn.feature_extraction.text import CountVectorizer

from spatiotemporal.analyzers.textproc import TermDoc
from spatiotemporal.data_access import TweetType
from spatiotemporal.errors import EmptyCorpus, EmptyScores, MissingLabel

logger = logging.getLogger(__name__)

CountUnit = Literal["token", "document"]
Axis = Literal["spatial", "temporal", "none"]

CELL_SEPARATOR = "|"


@dataclass
class TermCategoryCounts:
    vocabulary: list[str]
    categories: list[str]
    counts: np.ndarray          # int64, terms x categories

    @classmethod
    def from_matrix(
        cls, vocabulary: Sequence[str], categories: Sequence[str], counts,
    ) -> "TermCategoryCounts":
        matrix = np.asarray(counts, dtype=np.int64)
        if matrix.shape != (len(vocabulary), len(categories)):
            raise ValueError(
                f"counts shape {matrix.shape} does not match "
                f"{len(vocabulary)} terms x {len(categories)} categories"
            )
        if (matrix < 0).any():
            raise ValueError("counts must be non-negative")
        return cls(list(vocabulary), list(categories), matrix)

    @property
    def category_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def term_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def column(self, category: str) -> int:
        try:
            return self.categories.index(category)
        except ValueError:
            raise MissingLabel(
                f"unknown category {category!r}; known: {', '.join(self.categories)}"
            ) from None


@dataclass(frozen=True)
class SalienceEntry:
    term: str
    precision: float
    recall: float
    precision_cdf: float
    recall_cdf: float
    sfs: float


# ---------------------------------------------------------------------------
# Counting
# ---------------------------------------------------------------------------

def _terms_of(doc: Sequence[str]) -> Sequence[str]:
    return doc


def marginalize(docs: Iterable[TermDoc], axis: Axis) -> dict[str, str]:
    """
    Category label per record id.

    axis="spatial" folds the spatial label away (categories are periods),
    axis="temporal" folds the period away (Epicentre / Periphery), and
    axis="none" keeps the full "period|spatial" cross product.
    """
    if axis not in ("spatial", "temporal", "none"):
        raise ValueError(f"axis must be spatial, temporal or none, got {axis!r}")
    labels: dict[str, str] = {}
    for doc in docs:
        if not doc.period or not doc.spatial:
            raise MissingLabel(f"document {doc.record_id} lacks a period or spatial label")
        if axis == "spatial":
            labels[doc.record_id] = doc.period
        elif axis == "temporal":
            labels[doc.record_id] = doc.spatial
        else:
            labels[doc.record_id] = cell_label(doc.period, doc.spatial)
    return labels


def cell_label(period: str, spatial: str) -> str:
    return f"{period}{CELL_SEPARATOR}{spatial}"


def build_counts(
    docs: Iterable[TermDoc],
    category_of: Callable[[TermDoc], str | None] | Mapping[str, str],
    min_count: int = 5,
    count_unit: CountUnit = "token",
    categories: Sequence[str] | None = None,
) -> TermCategoryCounts:
    """
    Term x category counts over original tweets.

    A term survives when at least one category counts it min_count times.
    count_unit="document" counts tweets containing the term instead of
    occurrences. `categories` fixes the column order (default: sorted labels).
    """
    if count_unit not in ("token", "document"):
        raise ValueError(f"count_unit must be 'token' or 'document', got {count_unit!r}")
    lookup = category_of.get if isinstance(category_of, Mapping) else None

    term_lists: list[Sequence[str]] = []
    labels: list[str] = []
    for doc in docs:
        if doc.tweet_type != TweetType.ORIGINAL:
            continue
        label = lookup(doc.record_id) if lookup else category_of(doc)
        if label is None:
            raise MissingLabel(f"document {doc.record_id} has no category")
        term_lists.append(doc.terms)
        labels.append(label)
    if not any(term_lists):
        raise EmptyCorpus("no original tweets with terms to count")

    cats = list(categories) if categories is not None else sorted(set(labels))
    index = {c: i for i, c in enumerate(cats)}
    missing = sorted(set(labels) - set(index))
    if missing:
        raise MissingLabel(f"documents labelled with undeclared categories: {missing}")

    vectorizer = CountVectorizer(analyzer=_terms_of, binary=count_unit == "document")
    doc_term = vectorizer.fit_transform(term_lists)
    n_docs = len(labels)
    indicator = sparse.csr_matrix(
        (np.ones(n_docs, dtype=np.int64), (np.arange(n_docs), [index[c] for c in labels])),
        shape=(n_docs, len(cats)),
    )
    counts = np.asarray((doc_term.T @ indicator).todense(), dtype=np.int64)
    vocabulary = vectorizer.get_feature_names_out().tolist()

    keep = counts.max(axis=1) >= min_count
    if not keep.any():
        raise EmptyCorpus(f"no term reaches min_count={min_count} in any category")
    logger.debug("build_counts: %d docs, kept %d of %d terms", n_docs, int(keep.sum()), len(vocabulary))
    return TermCategoryCounts(
        vocabulary=[t for t, k in zip(vocabulary, keep) if k],
        categories=cats,
        counts=counts[keep],
    )


# ---------------------------------------------------------------------------
# Scaled F-score
# ---------------------------------------------------------------------------

def precision_recall(counts: TermCategoryCounts, focal: str) -> tuple[np.ndarray, np.ndarray]:
    """One-vs-rest P(focal | term) and P(term | focal); zero where undefined."""
    j = counts.column(focal)
    focal_counts = counts.counts[:, j].astype(float)
    term_totals = counts.term_totals.astype(float)
    precision = np.divide(
        focal_counts, term_totals, out=np.zeros_like(focal_counts), where=term_totals > 0,
    )
    total = float(counts.category_totals[j])
    recall = focal_counts / total if total > 0 else np.zeros_like(focal_counts)
    return precision, recall


def normal_cdf_transform(scores: Sequence[float] | np.ndarray) -> np.ndarray:
    """Standard normal CDF of z-scores (sample sd); a constant vector maps to 0.5."""
    values = np.asarray(scores, dtype=float)
    if values.size == 0:
        raise EmptyScores("normal_cdf_transform needs at least one score")
    if values.size == 1 or np.all(values == values[0]):
        return np.full(values.shape, 0.5)
    sigma = values.std(ddof=1)
    return norm.cdf((values - values.mean()) / sigma)


def scaled_f_score(counts: TermCategoryCounts, focal: str, beta: float = 1.0) -> list[SalienceEntry]:
    """
    Entries for every term, ranked by descending sfs then term.

        sfs = (1 + b^2) * P * R / (b^2 * P + R)

    with P and R the CDF-transformed precision and recall vectors.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    precision, recall = precision_recall(counts, focal)
    p_cdf = normal_cdf_transform(precision)
    r_cdf = normal_cdf_transform(recall)
    b2 = beta * beta
    denom = b2 * p_cdf + r_cdf
    sfs = np.divide((1.0 + b2) * p_cdf * r_cdf, denom, out=np.zeros_like(denom), where=denom > 0)

    entries = [
        SalienceEntry(term, float(p), float(r), float(pc), float(rc), float(s))
        for term, p, r, pc, rc, s in zip(counts.vocabulary, precision, recall, p_cdf, r_cdf, sfs)
    ]
    entries.sort(key=lambda e: (-e.sfs, e.term))
    return entries


def salience_by_category(
    counts: TermCategoryCounts, beta: float = 1.0,
) -> dict[str, list[SalienceEntry]]:
    return {c: scaled_f_score(counts, c, beta) for c in counts.categories}


def top_terms(entries: Sequence[SalienceEntry], k: int = 10) -> list[str]:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return [e.term for e in entries[:k]]


def most_frequent_terms(counts: TermCategoryCounts, k: int = 10) -> list[str]:
    """Plain frequency ranking over all categories; ties by term."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    totals = counts.term_totals
    order = sorted(range(len(counts.vocabulary)), key=lambda i: (-int(totals[i]), counts.vocabulary[i]))
    return [counts.vocabulary[i] for i in order[:k]]


def salience_frame(
    tables: Mapping[str, Sequence[SalienceEntry]], top_k: int | None = None,
) -> pd.DataFrame:
    """salience.csv layout: category, rank, term, precision, recall, precision_cdf, recall_cdf, sfs."""
    rows = []
    for category, entries in tables.items():
        for rank, e in enumerate(entries[:top_k] if top_k else entries, start=1):
            rows.append({
                "category": category,
                "rank": rank,
                "term": e.term,
                "precision": e.precision,
                "recall": e.recall,
                "precision_cdf": e.precision_cdf,
                "recall_cdf": e.recall_cdf,
                "sfs": e.sfs,
            })
    columns = ["category", "rank", "term", "precision", "recall", "precision_cdf", "recall_cdf", "sfs"]
    return pd.DataFrame(rows, columns=columns)
