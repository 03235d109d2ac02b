from __future__ import annotations

from datetime import date, datetime, timezone

import numpy as np
import pandas as pd
import pytest
from scipy.spatial.distance import cdist

from spatiotemporal.analyzers.temporal import (
    EPICENTRE,
    PERIPHERY,
    ClusterResult,
    PeriodConfig,
    TimeSeriesPanel,
    assign_period,
    build_series,
    kmeans,
    label_records,
    label_spatial_clusters,
    normalize_series,
    period_labels,
    remove_mean_trend,
    select_k,
    silhouette_score,
    smooth_series,
)
from spatiotemporal.data_access import TweetRecord, TweetType
from spatiotemporal.errors import BadAssignment, BadK, ConfigError, EmptyWindow, OutOfRange


def _utc(*args) -> datetime:
    return datetime(*args, tzinfo=timezone.utc)


def _panel(rows: dict[str, list[float]], tweet_type: str = "original") -> TimeSeriesPanel:
    index = pd.MultiIndex.from_tuples([(g, tweet_type) for g in rows], names=["group", "tweet_type"])
    columns = pd.date_range("2020-03-01", periods=len(next(iter(rows.values()))), freq="D", tz="UTC")
    return TimeSeriesPanel(counts=pd.DataFrame(list(rows.values()), index=index, columns=columns))


# ---------------------------------------------------------------------------
# Periods
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("instant, period", [
    (date(2020, 3, 10), "National"),
    (date(2020, 4, 10), "National"),
    (date(2020, 4, 11), "Prolongation"),
    (date(2020, 1, 27), "Pre"),
    (_utc(2020, 2, 22, 23, 59, 59), "Initial"),
    (date(2020, 5, 31), "Relaxing"),
])
def test_assign_period(instant, period):
    assert assign_period(instant, PeriodConfig()) == period


@pytest.mark.parametrize("instant", [date(2020, 1, 15), date(2020, 6, 1)])
def test_assign_period_out_of_range(instant):
    with pytest.raises(OutOfRange):
        assign_period(instant, PeriodConfig())


def test_period_labels_match_scalar_assignment():
    days = pd.Series(pd.date_range("2020-01-20", "2020-06-05", freq="D", tz="UTC"))
    labels = period_labels(days, PeriodConfig())
    for day, label in zip(days, labels):
        try:
            expected = assign_period(day.date(), PeriodConfig())
        except OutOfRange:
            expected = None
        assert label == expected


def test_period_config_validation():
    with pytest.raises(ConfigError):
        PeriodConfig(periods=(("A", date(2020, 3, 1)), ("B", date(2020, 2, 1))))
    with pytest.raises(ConfigError):
        PeriodConfig(periods=(("A", date(2020, 3, 1)), ("A", date(2020, 3, 5))))
    with pytest.raises(ConfigError):
        PeriodConfig(periods=(("A", date(2020, 3, 1)),), end=date(2020, 3, 1))


def test_period_config_from_dict():
    config = PeriodConfig.from_dict({
        "end": "2020-04-01",
        "period": [{"name": "Early", "start": "2020-02-01"}, {"name": "Late", "start": "2020-03-01"}],
    })
    assert config.names == ["Early", "Late"]
    assert config.bounds("Late") == (date(2020, 3, 1), date(2020, 4, 1))
    assert PeriodConfig.from_dict({}) == PeriodConfig()
    with pytest.raises(ConfigError):
        PeriodConfig.from_dict({"period": [{"name": "NoStart"}]})


# ---------------------------------------------------------------------------
# Panels
# ---------------------------------------------------------------------------

def _records():
    return [
        TweetRecord("1", _utc(2020, 3, 2, 8), "a", "Milano", TweetType.ORIGINAL),
        TweetRecord("2", _utc(2020, 3, 2, 9), "b", "Bergamo", TweetType.ORIGINAL),
        TweetRecord("3", _utc(2020, 3, 2, 23, 59), "c", "Lombardia", TweetType.ORIGINAL),
        TweetRecord("4", _utc(2020, 3, 4, 1), "RT @x d", "Roma", TweetType.RETWEET),
        TweetRecord("5", _utc(2020, 3, 3, 1), "e", "Antarctica", TweetType.ORIGINAL),
    ]


def test_build_series_counts_and_grid(hierarchy):
    labeled = label_records(_records(), hierarchy, PeriodConfig())
    panel = build_series(labeled, level="fine", start=date(2020, 3, 1), end=date(2020, 3, 6))
    assert panel.counts.shape == (4, 5)
    assert panel.counts.loc[("Lombardia", "original"), pd.Timestamp("2020-03-02", tz="UTC")] == 3
    assert panel.counts.loc[("Lazio", "retweet")].sum() == 1
    assert panel.counts.loc[("Lazio", "original")].sum() == 0
    assert "Unmapped" not in panel.counts.index.get_level_values("group")
    assert panel.counts.to_numpy().sum() == 4


def test_build_series_combined_types(hierarchy):
    labeled = label_records(_records(), hierarchy, PeriodConfig())
    panel = build_series(labeled, level="supra", by_type=False)
    assert list(panel.counts.index) == [("Centre", "all"), ("North", "all")]
    assert len(panel.dates) == 3


def test_build_series_matches_independent_tally(hierarchy):
    rng = np.random.default_rng(5)
    places = ["Milano", "Roma", "Napoli", "Palermo"]
    records = [
        TweetRecord(str(i), _utc(2020, 3, 1) + pd.Timedelta(seconds=int(s)).to_pytimedelta(), "x",
                    places[int(p)], TweetType.ORIGINAL)
        for i, (s, p) in enumerate(zip(rng.integers(0, 20 * 86_400, 500), rng.integers(0, 4, 500)))
    ]
    labeled = label_records(records, hierarchy, PeriodConfig())
    panel = build_series(labeled, level="supra", start=date(2020, 3, 1), end=date(2020, 3, 21))
    tally: dict[tuple[str, str], int] = {}
    for r, supra in zip(records, labeled["supra_region"]):
        key = (supra, r.created_at.date().isoformat())
        tally[key] = tally.get(key, 0) + 1
    for (supra, day), n in tally.items():
        assert panel.counts.loc[(supra, "original"), pd.Timestamp(day, tz="UTC")] == n
    assert panel.counts.to_numpy().sum() == 500


def test_build_series_empty_window(hierarchy):
    labeled = label_records(_records(), hierarchy, PeriodConfig())
    with pytest.raises(EmptyWindow):
        build_series(labeled, start=date(2020, 5, 1), end=date(2020, 5, 2))


def test_normalize_series_examples():
    panel = normalize_series(_panel({"a": [2, 3, 5], "b": [0, 0, 0], "c": [4, 6, 10]}))
    norm = panel.normalized.to_numpy()
    assert norm[0] == pytest.approx([0.2, 0.3, 0.5])
    assert norm[1].tolist() == [0.0, 0.0, 0.0]
    assert norm[2] == pytest.approx(norm[0])


def test_remove_mean_trend_example():
    panel = normalize_series(_panel({"a": [5, 5], "b": [3, 7]}))
    residual = remove_mean_trend(panel).residual.to_numpy()
    assert residual[0] == pytest.approx([0.1, -0.1])
    assert residual[1] == pytest.approx([-0.1, 0.1])


def test_remove_mean_trend_single_group_and_zero_sum():
    single = remove_mean_trend(normalize_series(_panel({"a": [1, 4, 2]})))
    assert np.allclose(single.residual.to_numpy(), 0.0)

    rng = np.random.default_rng(0)
    rows = {f"g{i}": rng.integers(0, 50, 30).tolist() for i in range(7)}
    panel = remove_mean_trend(normalize_series(_panel(rows)))
    assert np.allclose(panel.residual.to_numpy().sum(axis=0), 0.0, atol=1e-12)


def test_remove_mean_trend_is_per_tweet_type():
    a = _panel({"x": [1, 3], "y": [3, 1]}, "original")
    b = _panel({"x": [2, 2], "y": [2, 2]}, "retweet")
    panel = normalize_series(TimeSeriesPanel(counts=pd.concat([a.counts, b.counts])))
    only_rt = remove_mean_trend(panel, "retweet").residual
    assert only_rt.xs("original", level="tweet_type").isna().all().all()
    assert np.allclose(only_rt.xs("retweet", level="tweet_type").to_numpy(), 0.0)
    both = remove_mean_trend(panel).residual
    assert both.loc[("x", "original")].to_numpy() == pytest.approx([-0.25, 0.25])


def test_to_long_layout():
    panel = remove_mean_trend(normalize_series(_panel({"a": [1, 3], "b": [2, 2]})))
    long = panel.to_long()
    assert list(long.columns) == ["group", "tweet_type", "date", "count", "normalized", "residual"]
    assert len(long) == 4
    assert long.iloc[1][["group", "count"]].tolist() == ["a", 3]
    assert long.iloc[1]["normalized"] == pytest.approx(0.75)


def test_smooth_series():
    frame = pd.DataFrame([[0.0, 2.0, 4.0]])
    assert smooth_series(frame, 1) is frame
    assert smooth_series(frame, 2).to_numpy().tolist() == [[0.0, 1.0, 3.0]]


# ---------------------------------------------------------------------------
# K-Means and silhouette
# ---------------------------------------------------------------------------

def test_kmeans_k1_is_mean_row():
    X = np.random.default_rng(1).normal(size=(12, 4))
    result = kmeans(X, 1, seed=3, restarts=2)
    assert result.centroids[0] == pytest.approx(X.mean(axis=0))
    assert result.inertia == pytest.approx(((X - X.mean(axis=0)) ** 2).sum())
    assert result.silhouette == 0.0


def test_kmeans_separable_exact_recovery():
    X = np.array([[0.0, 0.0]] * 3 + [[10.0, 10.0]] * 2)
    result = kmeans(X, 2, seed=0, groups=["e", "d", "c", "b", "a"])
    assert result.inertia == 0.0
    assert result.assignment == {"a": 0, "b": 0, "c": 1, "d": 1, "e": 1}
    assert result.silhouette == pytest.approx(1.0)


def test_kmeans_is_deterministic():
    X = np.random.default_rng(2).normal(size=(30, 6))
    first = kmeans(X, 3, seed=11)
    second = kmeans(X, 3, seed=11)
    assert first.assignment == second.assignment
    assert first.inertia == second.inertia
    assert np.array_equal(first.centroids, second.centroids)


def test_kmeans_inertia_never_increases():
    for seed in range(10):
        X = np.random.default_rng(seed).normal(size=(40, 5))
        result = kmeans(X, 4, seed=seed, restarts=3)
        history = result.inertia_history
        assert all(b <= a * (1 + 1e-12) for a, b in zip(history, history[1:]))


def test_kmeans_identical_rows():
    result = kmeans(np.ones((4, 3)), 2, seed=0)
    assert result.inertia == 0.0
    assert sorted(result.assignment.values()) == [0, 0, 1, 1]


def _partition(assignment: dict[str, int]) -> set[frozenset[str]]:
    members: dict[int, set[str]] = {}
    for group, label in assignment.items():
        members.setdefault(label, set()).add(group)
    return {frozenset(m) for m in members.values()}


def test_kmeans_partition_ignores_row_order():
    for trial in range(50):
        rng = np.random.default_rng(trial)
        X = rng.normal(size=(12, 5))
        groups = [f"g{i:02d}" for i in range(12)]
        perm = rng.permutation(12)
        base = kmeans(X, 3, seed=0, restarts=3, groups=groups)
        shuffled = kmeans(X[perm], 3, seed=0, restarts=3, groups=[groups[i] for i in perm])
        assert shuffled.assignment == base.assignment, f"trial {trial}"
        assert _partition(shuffled.assignment) == _partition(base.assignment)
        assert shuffled.inertia == pytest.approx(base.inertia)


@pytest.mark.parametrize("k", [0, 5])
def test_kmeans_bad_k(k):
    with pytest.raises(BadK):
        kmeans(np.zeros((4, 2)), k)


def test_silhouette_examples():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0]])
    assert silhouette_score(X, [0, 0, 1, 1]) == pytest.approx(1.0)
    assert silhouette_score(np.zeros((4, 2)), [0, 1, 0, 1]) == 0.0
    with pytest.raises(BadAssignment):
        silhouette_score(X, [0, 0, 0, 0])
    with pytest.raises(BadAssignment):
        silhouette_score(X, [0, 1])


def _silhouette_oracle(X: np.ndarray, labels: np.ndarray) -> float:
    d = cdist(X, X)
    scores = []
    for i, own in enumerate(labels):
        same = (labels == own) & (np.arange(len(X)) != i)
        if not same.any():
            scores.append(0.0)
            continue
        a = d[i, same].mean()
        b = min(d[i, labels == other].mean() for other in set(labels.tolist()) if other != own)
        scores.append(0.0 if max(a, b) == 0 else (b - a) / max(a, b))
    return float(np.mean(scores))


def test_silhouette_matches_pairwise_oracle():
    rng = np.random.default_rng(4)
    centres = np.array([[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]])
    X = np.vstack([c + rng.normal(scale=0.7, size=(15, 2)) for c in centres])
    truth = np.repeat([0, 1, 2], 15)
    shuffled = rng.permutation(truth)
    assert silhouette_score(X, truth) == pytest.approx(_silhouette_oracle(X, truth))
    assert silhouette_score(X, shuffled) == pytest.approx(_silhouette_oracle(X, shuffled))
    assert silhouette_score(X, truth) > silhouette_score(X, shuffled)


def test_silhouette_bounded_on_random_data():
    for trial in range(30):
        rng = np.random.default_rng(100 + trial)
        n = int(rng.integers(4, 40))
        X = rng.normal(size=(n, 3))
        labels = np.arange(n) % int(rng.integers(2, min(n - 1, 6) + 1))
        rng.shuffle(labels)
        score = silhouette_score(X, labels)
        assert -1.0 <= score <= 1.0


def test_silhouette_ignores_label_names():
    for trial in range(20):
        rng = np.random.default_rng(200 + trial)
        X = rng.normal(size=(20, 4))
        labels = np.arange(20) % 4
        renamed = rng.permutation(4)[labels] + 7
        assert silhouette_score(X, renamed) == pytest.approx(silhouette_score(X, labels), abs=1e-12)


def _shape(center: int, n_days: int = 120, width: float = 8.0) -> np.ndarray:
    days = np.arange(n_days)
    return 1.0 + 50.0 * np.exp(-0.5 * ((days - center) / width) ** 2)


def _planted_panel(rng, centers, per_shape):
    rows, truth = [], []
    for label, center in enumerate(centers):
        for _ in range(per_shape):
            scale = rng.uniform(5, 50)
            noisy = scale * _shape(center) * (1 + 0.05 * rng.standard_normal(120))
            rows.append(noisy / noisy.sum())
            truth.append(label)
    return np.array(rows), np.array(truth)


def _same_partition(assignment: np.ndarray, truth: np.ndarray) -> bool:
    pairs = set(zip(assignment.tolist(), truth.tolist()))
    return len(pairs) == len(set(truth.tolist())) == len(set(assignment.tolist()))


def test_select_k_recovers_two_planted_shapes():
    recovered = 0
    for trial in range(100):
        rng = np.random.default_rng(trial)
        X, truth = _planted_panel(rng, centers=(30, 70), per_shape=10)
        result = select_k(X, range(2, 9), seed=trial, restarts=5)
        labels = result.labels_for(str(i) for i in range(len(X)))
        recovered += result.k == 2 and _same_partition(labels, truth)
    assert recovered >= 95


def test_select_k_three_shapes():
    X, truth = _planted_panel(np.random.default_rng(9), centers=(20, 60, 100), per_shape=6)
    result = select_k(X, range(2, 9), seed=1)
    assert result.k == 3
    assert _same_partition(result.labels_for(str(i) for i in range(len(X))), truth)
    assert set(result.silhouette_by_k) == set(range(2, 9))


def test_select_k_single_candidate_and_bad_range():
    X = np.random.default_rng(3).normal(size=(6, 3))
    assert select_k(X, range(2, 3), seed=0).k == 2
    with pytest.raises(BadK):
        select_k(X, range(2, 7))
    with pytest.raises(BadK):
        select_k(X, range(1, 3))


def test_label_spatial_clusters():
    periods = PeriodConfig()
    dates = pd.date_range("2020-02-15", "2020-03-15", freq="D", inclusive="left", tz="UTC")
    initial = (dates >= pd.Timestamp("2020-02-19", tz="UTC")) & (dates < pd.Timestamp("2020-02-23", tz="UTC"))
    early = np.where(initial, 1.0, 0.0)
    result = ClusterResult(
        k=2,
        assignment={"Lombardia": 1, "Veneto": 1, "Sicilia": 0},
        centroids=np.vstack([1.0 - early, early]),
        inertia=0.0,
        silhouette=1.0,
        seed=0,
    )
    spatial = label_spatial_clusters(result, dates, periods)
    assert spatial == {"Lombardia": EPICENTRE, "Veneto": EPICENTRE, "Sicilia": PERIPHERY}
    with pytest.raises(OutOfRange):
        label_spatial_clusters(result, dates, periods, epicentre_period="Relaxing")
