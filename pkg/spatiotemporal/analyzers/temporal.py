"""
Temporal analyzer.

Answers: when did each region tweet, and which regions tweeted alike?
Builds per-group daily tweet-count panels, normalizes them to unit sum,
removes the across-group mean trend per tweet type, segments time into the
configured policy periods, and clusters regional series with K-Means
(k-means++ seeding, Euclidean distance) choosing k by silhouette.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field, replace
from datetime import date, datetime
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist
from sklearn.cluster import kmeans_plusplus
from sklearn.metrics import silhouette_samples

from spatiotemporal.analyzers.geonorm import UNMAPPED, RegionHierarchy, normalize_locations
from spatiotemporal.data_access import TweetRecord, as_utc_datetime, records_frame
from spatiotemporal.errors import BadAssignment, BadK, ConfigError, EmptyWindow, OutOfRange

logger = logging.getLogger(__name__)

TWEET_TYPES = ("original", "retweet")
ALL_TYPES = "all"
EPICENTRE = "Epicentre"
PERIPHERY = "Periphery"

DEFAULT_PERIODS: tuple[tuple[str, date], ...] = (
    ("Pre", date(2020, 1, 27)),
    ("Initial", date(2020, 2, 19)),
    ("Northern", date(2020, 2, 23)),
    ("National", date(2020, 3, 10)),
    ("Prolongation", date(2020, 4, 11)),
    ("Relaxing", date(2020, 5, 5)),
)
DEFAULT_END = date(2020, 6, 1)

# Relative slack when checking that Lloyd iterations never raise inertia
_MONOTONE_SLACK = 1e-12


# ---------------------------------------------------------------------------
# Periods
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeriodConfig:
    """Ordered (name, start) pairs; period i covers [start_i, start_{i+1}), the last ends at `end`."""

    periods: tuple[tuple[str, date], ...] = DEFAULT_PERIODS
    end: date = DEFAULT_END

    def __post_init__(self) -> None:
        if not self.periods:
            raise ConfigError("at least one period is required")
        names = [n for n, _ in self.periods]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate period names: {names}")
        starts = [s for _, s in self.periods] + [self.end]
        if any(a >= b for a, b in zip(starts, starts[1:])):
            raise ConfigError("period start dates must be strictly increasing and before the end date")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "PeriodConfig":
        items = raw.get("period") or []
        end = _as_date(raw.get("end", DEFAULT_END))
        if not items:
            return cls(end=end)
        try:
            periods = tuple((str(p["name"]), _as_date(p["start"])) for p in items)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"[periods] each period needs a name and an ISO start date ({exc})") from None
        return cls(periods=periods, end=end)

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.periods]

    @property
    def start(self) -> date:
        return self.periods[0][1]

    def bounds(self, name: str) -> tuple[date, date]:
        starts = [s for _, s in self.periods] + [self.end]
        for i, (n, s) in enumerate(self.periods):
            if n == name:
                return s, starts[i + 1]
        raise ConfigError(f"unknown period {name!r}; known: {', '.join(self.names)}")


def _as_date(value) -> date:
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    return date.fromisoformat(str(value))


def assign_period(instant: date | datetime, periods: PeriodConfig) -> str:
    """Period whose half-open interval contains the instant's UTC date."""
    day = as_utc_datetime(instant).date() if isinstance(instant, datetime) else instant
    if day < periods.start or day >= periods.end:
        raise OutOfRange(f"{day.isoformat()} is outside [{periods.start}, {periods.end})")
    starts = [s for _, s in periods.periods]
    return periods.periods[bisect.bisect_right(starts, day) - 1][0]


def period_labels(days: pd.Series, periods: PeriodConfig) -> pd.Series:
    """Vectorized assign_period over UTC-midnight timestamps; None outside the window."""
    starts = pd.DatetimeIndex([pd.Timestamp(s, tz="UTC") for _, s in periods.periods])
    end = pd.Timestamp(periods.end, tz="UTC")
    idx = np.searchsorted(starts.values, days.values, side="right") - 1
    names = np.array(periods.names, dtype=object)
    out = np.where(idx >= 0, names[np.clip(idx, 0, None)], None)
    out = np.where((days >= end).to_numpy(), None, out)
    return pd.Series(out, index=days.index, dtype=object)


# ---------------------------------------------------------------------------
# Labelled records
# ---------------------------------------------------------------------------

def label_records(
    records: Sequence[TweetRecord],
    hierarchy: RegionHierarchy,
    periods: PeriodConfig,
) -> pd.DataFrame:
    """records_frame() plus fine_region, supra_region and period columns."""
    df = records_frame(records)
    locs = normalize_locations(df["user_location"].tolist(), hierarchy)
    df["fine_region"] = [loc.fine_region for loc in locs]
    df["supra_region"] = [loc.supra_region for loc in locs]
    df["period"] = period_labels(df["date"], periods) if len(df) else pd.Series(dtype=object)
    return df


# ---------------------------------------------------------------------------
# Panels
# ---------------------------------------------------------------------------

@dataclass
class TimeSeriesPanel:
    """
    counts / normalized / residual share one layout: rows are a
    (group, tweet_type) MultiIndex, columns a contiguous daily UTC grid.
    """

    counts: pd.DataFrame
    level: str = "fine"
    normalized: pd.DataFrame | None = None
    residual: pd.DataFrame | None = None

    @property
    def groups(self) -> list[tuple[str, str]]:
        return list(self.counts.index)

    @property
    def dates(self) -> pd.DatetimeIndex:
        return pd.DatetimeIndex(self.counts.columns)

    def to_long(self) -> pd.DataFrame:
        """One row per (group, tweet_type, date) with count, normalized, residual."""
        n_rows, n_days = self.counts.shape
        long = pd.DataFrame({
            "group": self.counts.index.get_level_values("group").repeat(n_days),
            "tweet_type": self.counts.index.get_level_values("tweet_type").repeat(n_days),
            "date": self.dates[np.tile(np.arange(n_days), n_rows)],
            "count": self.counts.to_numpy().ravel(),
        })
        for name in ("normalized", "residual"):
            frame = getattr(self, name)
            long[name] = frame.to_numpy(dtype=float).ravel() if frame is not None else np.nan
        return long


def build_series(
    labeled: pd.DataFrame,
    level: str = "fine",
    start: date | None = None,
    end: date | None = None,
    by_type: bool = True,
) -> TimeSeriesPanel:
    """
    Daily counts per group (fine or supra region) and tweet type.

    Unmapped records are excluded. The date grid covers [start, end) fully,
    missing days are 0. With by_type=False both tweet types are combined
    under the label "all".
    """
    column = {"fine": "fine_region", "supra": "supra_region"}.get(level)
    if column is None:
        raise ValueError(f"level must be 'fine' or 'supra', got {level!r}")
    if labeled.empty:
        raise EmptyWindow("no records to build a series from")

    lo = pd.Timestamp(start if start is not None else labeled["date"].min().date(), tz="UTC")
    hi = pd.Timestamp(end, tz="UTC") if end is not None else labeled["date"].max() + pd.Timedelta(days=1)
    df = labeled[(labeled[column] != UNMAPPED) & (labeled["date"] >= lo) & (labeled["date"] < hi)]
    if df.empty:
        raise EmptyWindow(f"no mapped records in [{lo.date()}, {hi.date()})")

    df = df.assign(_type=df["tweet_type"] if by_type else ALL_TYPES)
    types = TWEET_TYPES if by_type else (ALL_TYPES,)
    grid = pd.date_range(lo, hi, freq="D", inclusive="left")
    index = pd.MultiIndex.from_product([sorted(df[column].unique()), types], names=["group", "tweet_type"])

    counts = (
        df.groupby([column, "_type", "date"]).size()
        .unstack("date", fill_value=0)
        .rename_axis(index=["group", "tweet_type"], columns=None)
        .reindex(index=index, columns=grid, fill_value=0)
        .astype(np.int64)
    )
    return TimeSeriesPanel(counts=counts, level=level)


def normalize_series(panel: TimeSeriesPanel) -> TimeSeriesPanel:
    """Divide each row by its sum; all-zero rows stay zero."""
    totals = panel.counts.sum(axis=1)
    normalized = panel.counts.div(totals.where(totals > 0), axis=0).fillna(0.0)
    return replace(panel, normalized=normalized)


def remove_mean_trend(panel: TimeSeriesPanel, tweet_type: str | None = None) -> TimeSeriesPanel:
    """
    Subtract, per tweet type, the across-group mean normalized series from
    every group's normalized series. tweet_type=None does every type present;
    otherwise only that type's residual rows are (re)computed.
    """
    if panel.normalized is None:
        raise ValueError("remove_mean_trend needs a normalized panel; call normalize_series first")
    norm = panel.normalized
    if panel.residual is not None:
        residual = panel.residual.copy()
    else:
        residual = pd.DataFrame(np.nan, index=norm.index, columns=norm.columns)

    present = list(dict.fromkeys(norm.index.get_level_values("tweet_type")))
    types = present if tweet_type is None else [tweet_type]
    for t in types:
        rows = norm.xs(t, level="tweet_type", drop_level=False)
        residual.loc[rows.index] = rows - rows.mean(axis=0)
    return replace(panel, residual=residual)


def smooth_series(frame: pd.DataFrame, window: int = 1) -> pd.DataFrame:
    """Trailing rolling mean along the date axis; window 1 returns the frame unchanged."""
    if window <= 1:
        return frame
    return frame.T.rolling(window, min_periods=1).mean().T


# ---------------------------------------------------------------------------
# Clustering
# ---------------------------------------------------------------------------

@dataclass
class ClusterResult:
    k: int
    assignment: dict[str, int]
    centroids: np.ndarray
    inertia: float
    silhouette: float
    seed: int
    inertia_history: list[float] = field(default_factory=list)
    silhouette_by_k: dict[int, float] = field(default_factory=dict)

    def labels_for(self, groups: Iterable[str]) -> np.ndarray:
        return np.array([self.assignment[g] for g in groups])


def _fill_empty(
    X: np.ndarray, labels: np.ndarray, centroids: np.ndarray, d2: np.ndarray, k: int,
) -> None:
    """Re-seed each empty cluster at the point farthest from its centroid (in place)."""
    n = len(X)
    for j in range(k):
        sizes = np.bincount(labels, minlength=k)
        if sizes[j] > 0:
            continue
        own = d2[np.arange(n), labels]
        movable = sizes[labels] > 1
        p = int(np.argmax(np.where(movable, own, -1.0)))
        centroids[j] = X[p]
        d2[:, j] = ((X - X[p]) ** 2).sum(axis=1)
        labels[p] = j


def _lloyd(
    X: np.ndarray, k: int, seed: int, max_iter: int, tol: float,
) -> tuple[np.ndarray, np.ndarray, float, list[float]]:
    n = len(X)
    centroids, _ = kmeans_plusplus(X, n_clusters=k, random_state=seed)
    centroids = np.array(centroids, dtype=float)
    history: list[float] = []
    prev_labels: np.ndarray | None = None

    for _ in range(max_iter):
        d2 = cdist(X, centroids, "sqeuclidean")
        labels = d2.argmin(axis=1)
        _fill_empty(X, labels, centroids, d2, k)
        inertia = float(d2[np.arange(n), labels].sum())
        if history and inertia > history[-1] * (1.0 + _MONOTONE_SLACK) + 1e-300:
            raise RuntimeError(f"k-means inertia increased from {history[-1]!r} to {inertia!r}")
        history.append(inertia)
        if prev_labels is not None and (
            np.array_equal(labels, prev_labels) or history[-2] - inertia <= tol * history[-2]
        ):
            break
        prev_labels = labels
        centroids = np.vstack([X[labels == j].mean(axis=0) for j in range(k)])

    centroids = np.vstack([X[labels == j].mean(axis=0) for j in range(k)])
    final = float(cdist(X, centroids, "sqeuclidean")[np.arange(n), labels].sum())
    history.append(min(final, history[-1]))
    return labels, centroids, history[-1], history


def _canonical_order(labels: np.ndarray, keys: Sequence, k: int) -> np.ndarray:
    """Map old label -> new label so clusters are numbered by their smallest member key."""
    smallest = {}
    for key, lbl in zip(keys, labels):
        if lbl not in smallest or key < smallest[lbl]:
            smallest[lbl] = key
    ordered = sorted(range(k), key=lambda j: (j not in smallest, smallest.get(j, None) or 0, j))
    mapping = np.empty(k, dtype=int)
    for new, old in enumerate(ordered):
        mapping[old] = new
    return mapping


def kmeans(
    series: np.ndarray | pd.DataFrame,
    k: int,
    seed: int = 0,
    restarts: int = 20,
    max_iter: int = 300,
    tol: float = 1e-6,
    groups: Sequence[str] | None = None,
) -> ClusterResult:
    """
    Lloyd's K-Means with k-means++ seeding; restart r is seeded with seed + r
    and the lowest inertia wins (ties keep the earlier restart).

    tol bounds the relative inertia improvement that still counts as progress.
    Labels are canonical: cluster 0 holds the smallest group id.
    """
    X = np.asarray(series, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise BadK("series must be a non-empty 2-D matrix")
    n = len(X)
    if not 1 <= k <= n:
        raise BadK(f"k={k} must be between 1 and the number of series ({n})")
    if restarts < 1:
        raise BadK("restarts must be >= 1")
    ids = [str(g) for g in groups] if groups is not None else [str(i) for i in range(n)]
    if len(ids) != n:
        raise BadAssignment(f"{len(ids)} group ids for {n} series")
    keys: Sequence = ids if groups is not None else list(range(n))

    # work in key order so the partition does not depend on row order
    order = np.array(sorted(range(n), key=lambda i: keys[i]), dtype=int)
    X = X[order]
    keys = [keys[i] for i in order]

    if k > 1 and np.all(X == X[0]):
        logger.warning("kmeans: all %d series are identical; splitting them round-robin", n)
        labels = np.arange(n) % k
        centroids = np.repeat(X[:1], k, axis=0)
        history = [0.0]
        inertia = 0.0
    else:
        best: tuple | None = None
        for r in range(restarts):
            run = _lloyd(X, k, seed + r, max_iter, tol)
            if best is None or run[2] < best[2]:
                best = run
        labels, centroids, inertia, history = best

    mapping = _canonical_order(labels, keys, k)
    labels = mapping[labels]
    reordered = np.empty_like(centroids)
    reordered[mapping] = centroids

    sil = 0.0
    if k >= 2 and len(np.unique(labels)) >= 2:
        sil = silhouette_score(X, labels)
    return ClusterResult(
        k=k,
        assignment={ids[i]: int(lbl) for i, lbl in zip(order, labels)},
        centroids=reordered,
        inertia=float(inertia),
        silhouette=sil,
        seed=seed,
        inertia_history=list(history),
    )


def silhouette_score(series: np.ndarray | pd.DataFrame, assignment: Sequence[int]) -> float:
    """
    Mean silhouette with Euclidean distances. Singleton-cluster samples score 0,
    and a = b = 0 (identical points) also scores 0.
    """
    X = np.asarray(series, dtype=float)
    labels = np.asarray(list(assignment))
    if labels.shape[0] != X.shape[0]:
        raise BadAssignment(f"{labels.shape[0]} labels for {X.shape[0]} series")
    n_clusters = len(np.unique(labels))
    if n_clusters < 2:
        raise BadAssignment("silhouette needs at least two non-empty clusters")
    if n_clusters == len(labels):
        return 0.0
    return float(np.mean(silhouette_samples(X, labels, metric="euclidean")))


def select_k(
    series: np.ndarray | pd.DataFrame,
    k_range: Iterable[int] = range(2, 9),
    seed: int = 0,
    groups: Sequence[str] | None = None,
    **kmeans_kwargs,
) -> ClusterResult:
    """Run kmeans for every k and keep the best silhouette; ties go to the smaller k."""
    n = len(np.asarray(series))
    ks = sorted(set(k_range))
    if not ks or ks[0] < 2 or ks[-1] > n - 1:
        raise BadK(f"k range {ks} must lie within [2, {n - 1}]")
    best: ClusterResult | None = None
    scores: dict[int, float] = {}
    for k in ks:
        result = kmeans(series, k, seed=seed, groups=groups, **kmeans_kwargs)
        scores[k] = result.silhouette
        logger.debug("select_k: k=%d silhouette=%.4f inertia=%.6g", k, result.silhouette, result.inertia)
        if best is None or result.silhouette > best.silhouette:
            best = result
    best.silhouette_by_k = scores
    return best


def label_spatial_clusters(
    result: ClusterResult,
    dates: pd.DatetimeIndex,
    periods: PeriodConfig,
    epicentre_period: str = "Initial",
) -> dict[str, str]:
    """
    Name the cluster whose centroid carries the most mass in the epicentre
    period "Epicentre"; every other cluster is "Periphery".
    """
    lo, hi = (pd.Timestamp(d, tz="UTC") for d in periods.bounds(epicentre_period))
    mask = np.asarray((dates >= lo) & (dates < hi))
    if not mask.any():
        raise OutOfRange(f"period {epicentre_period!r} does not overlap the series dates")
    mass = result.centroids[:, mask].sum(axis=1)
    epicentre = int(np.argmax(mass))
    return {g: EPICENTRE if lbl == epicentre else PERIPHERY for g, lbl in result.assignment.items()}
