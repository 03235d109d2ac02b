"""
Pipeline orchestrator.

Runs ingest -> textproc -> geonorm -> temporal -> salience -> coding and
writes every artifact of a run into the configured output directory:

    series.csv, clusters.csv, salience.csv, ratios.csv, table1.md,
    vocabulary.tsv, series plot data, manifest.json

Outputs depend only on the config, the input files and the seed; nothing
time-dependent is written. The first error inside a stage aborts the run as
a StageError naming that stage.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import pandas as pd

from spatiotemporal.analyzers.coding import (
    RatioTable,
    apply_codebook,
    category_ratios,
    ratio_frame,
)
from spatiotemporal.analyzers.geonorm import (
    UNMAPPED,
    NormalizedLocation,
    report_unmapped,
    supra_shares,
)
from spatiotemporal.analyzers.salience import (
    SalienceEntry,
    build_counts,
    cell_label,
    marginalize,
    most_frequent_terms,
    salience_frame,
    scaled_f_score,
    top_terms,
)
from spatiotemporal.analyzers.temporal import (
    EPICENTRE,
    PERIPHERY,
    ClusterResult,
    TimeSeriesPanel,
    build_series,
    label_records,
    label_spatial_clusters,
    normalize_series,
    remove_mean_trend,
    select_k,
    smooth_series,
)
from spatiotemporal.analyzers.textproc import (
    TermDoc,
    TermVocabulary,
    Tokenizer,
    build_month_counts,
    clean_text,
    compute_pmi,
    save_vocabulary,
    segment_terms,
    select_vocabulary,
    tokenize,
)
from spatiotemporal.config import PipelineConfig
from spatiotemporal.data_access import (
    TweetRecord,
    TweetType,
    dedupe,
    filter_language,
    filter_window,
    read_records,
)
from spatiotemporal.errors import BadK, CorpusError, EmptyCorpus, StageError
from spatiotemporal.report.renderer import (
    Table1,
    Table1Row,
    clusters_frame,
    emit_series_plotdata,
    emit_table1,
    provenance_header,
    series_frame,
    write_csv,
    write_manifest,
    write_text,
)

logger = logging.getLogger(__name__)

SPATIAL_COLUMNS = (PERIPHERY, EPICENTRE)
CLUSTERS_ROW = "Clusters"
RATIOS_ROW = "Ratios"


# ---------------------------------------------------------------------------
# Stage results
# ---------------------------------------------------------------------------

@dataclass
class IngestStats:
    read: int = 0
    duplicates: int = 0
    out_of_window: int = 0
    language_filtered: int = 0
    kept: int = 0


@dataclass
class TemporalResult:
    supra_all: TimeSeriesPanel
    supra_by_type: TimeSeriesPanel
    fine_all: TimeSeriesPanel
    fine_by_type: TimeSeriesPanel
    clusters: ClusterResult
    spatial: dict[str, str]


@dataclass
class PipelineRun:
    config_hash: str
    seed: int
    out_dir: Path
    manifest: dict = field(default_factory=dict)
    ingest: IngestStats = field(default_factory=IngestStats)
    shares: pd.DataFrame | None = None
    vocabulary: TermVocabulary | None = None
    temporal: TemporalResult | None = None
    salience: dict[str, list[SalienceEntry]] = field(default_factory=dict)
    top: dict[str, list[str]] = field(default_factory=dict)
    ratios: list[RatioTable] = field(default_factory=list)
    table1: Table1 | None = None


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Re-raise the first failure inside the block as StageError(name, cause)."""
    logger.info("stage: %s", name)
    try:
        yield
    except StageError:
        raise
    except (CorpusError, OSError, ValueError) as exc:
        raise StageError(name, exc) from exc


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def ingest_records(config: PipelineConfig) -> tuple[list[TweetRecord], IngestStats]:
    stats = IngestStats()
    records = read_records(config.input.paths, config.input.fields, config.input.on_error)
    stats.read = len(records)
    records, stats.duplicates = dedupe(records)
    records, stats.out_of_window = filter_window(records, config.periods.start, config.periods.end)
    records, stats.language_filtered = filter_language(records, config.input.languages)
    stats.kept = len(records)
    if not records:
        raise EmptyCorpus("no records left after deduplication and windowing")
    logger.info(
        "ingest: read %d, duplicates %d, outside window %d, language-filtered %d, kept %d",
        stats.read, stats.duplicates, stats.out_of_window, stats.language_filtered, stats.kept,
    )
    return records, stats


def build_vocabulary(
    config: PipelineConfig, records: list[TweetRecord], tokenizer: Tokenizer = tokenize,
) -> tuple[TermVocabulary, dict[str, list[str]]]:
    """Collocation vocabulary from original tweets, plus each original tweet's segmented terms."""
    tokens = {
        r.id: tokenizer(clean_text(r.text, config.rules))
        for r in records if r.tweet_type is TweetType.ORIGINAL
    }
    months = {r.id: r.created_at.strftime("%Y-%m") for r in records}
    month_counts = build_month_counts((months[rid], toks) for rid, toks in tokens.items())
    candidates = {m: compute_pmi(c) for m, c in month_counts.items()}
    vocab = select_vocabulary(
        candidates,
        pmi_mass=config.ngrams.pmi_mass,
        freq_mass=config.ngrams.freq_mass,
        pool_orders=config.ngrams.pool_orders,
    )
    logger.info("textproc: %d collocations admitted over %d month(s)", len(vocab), len(month_counts))
    terms = {rid: segment_terms(toks, vocab) for rid, toks in tokens.items()}
    return vocab, terms


def locate_records(config: PipelineConfig, records: list[TweetRecord]) -> tuple[pd.DataFrame, pd.DataFrame]:
    labeled = label_records(records, config.hierarchy, config.periods)
    shares = supra_shares(
        NormalizedLocation(f, s) for f, s in zip(labeled["fine_region"], labeled["supra_region"])
    )
    unmapped = int((labeled["fine_region"] == UNMAPPED).sum())
    logger.info("geonorm: %d of %d records unmapped", unmapped, len(labeled))
    for raw, n in report_unmapped(labeled["user_location"], config.hierarchy, top=5):
        logger.debug("geonorm: unmapped %r x%d", raw, n)
    return labeled, shares


def cluster_regions(config: PipelineConfig, labeled: pd.DataFrame) -> TemporalResult:
    periods, c = config.periods, config.clustering
    window = dict(start=periods.start, end=periods.end)

    supra_all = normalize_series(build_series(labeled, "supra", by_type=False, **window))
    supra_by_type = remove_mean_trend(normalize_series(build_series(labeled, "supra", **window)))
    fine_all = remove_mean_trend(normalize_series(build_series(labeled, "fine", by_type=False, **window)))
    fine_by_type = remove_mean_trend(normalize_series(build_series(labeled, "fine", **window)))

    features = smooth_series(fine_all.residual if c.use_residuals else fine_all.normalized, c.smoothing_window)
    groups = [g for g, _ in features.index]
    k_max = min(c.k_max, len(groups) - 1)
    if k_max < c.k_min:
        raise BadK(f"{len(groups)} mapped region(s) are too few to cluster with k >= {c.k_min}")

    result = select_k(
        features.to_numpy(),
        range(c.k_min, k_max + 1),
        seed=config.seed,
        groups=groups,
        restarts=c.restarts,
        max_iter=c.max_iter,
        tol=c.tol,
    )
    spatial = label_spatial_clusters(result, fine_all.dates, periods, c.epicentre_period)
    logger.info(
        "temporal: k=%d silhouette=%.3f, %d epicentre region(s)",
        result.k, result.silhouette, sum(v == EPICENTRE for v in spatial.values()),
    )
    return TemporalResult(supra_all, supra_by_type, fine_all, fine_by_type, result, spatial)


def term_documents(
    labeled: pd.DataFrame, terms: dict[str, list[str]], spatial: dict[str, str],
) -> list[TermDoc]:
    """Original, mapped, in-period tweets as labelled term documents."""
    docs = []
    for rid, fine, period, ttype in zip(
        labeled["id"], labeled["fine_region"], labeled["period"], labeled["tweet_type"]
    ):
        if rid not in terms or fine == UNMAPPED or not isinstance(period, str) or fine not in spatial:
            continue
        docs.append(TermDoc(rid, tuple(terms[rid]), fine, period, TweetType(ttype), spatial[fine]))
    if not docs:
        raise EmptyCorpus("no original, located tweets to score")
    return docs


def score_terms(
    config: PipelineConfig, docs: list[TermDoc],
) -> tuple[dict[str, list[SalienceEntry]], dict[str, list[str]]]:
    """Ranked salience per category for cells, cluster marginals and period marginals."""
    s = config.salience
    names = config.periods.names
    labelings = (
        ("none", [cell_label(p, sp) for p in names for sp in SPATIAL_COLUMNS]),
        ("temporal", list(SPATIAL_COLUMNS)),
        ("spatial", names),
    )
    tables: dict[str, list[SalienceEntry]] = {}
    frequent: list[str] = []
    for axis, categories in labelings:
        counts = build_counts(docs, marginalize(docs, axis), s.min_count, s.count_unit, categories)
        for category, total in zip(counts.categories, counts.category_totals):
            tables[category] = scaled_f_score(counts, category, s.beta) if total > 0 else []
        if axis == "none":
            frequent = most_frequent_terms(counts, s.top_k)
    top = {c: top_terms(entries, s.top_k) if entries else [] for c, entries in tables.items()}
    top[f"{CLUSTERS_ROW}|Marginal"] = frequent
    return tables, top


def code_terms(config: PipelineConfig, top: dict[str, list[str]]) -> tuple[Table1, list[RatioTable]]:
    codebook = config.codebook
    coded = {c: apply_codebook(terms, codebook) for c, terms in top.items()}
    names = config.periods.names
    ratios: list[RatioTable] = []

    rows: list[Table1Row] = []
    for p in names:
        lists = [coded[cell_label(p, sp)] for sp in SPATIAL_COLUMNS]
        row = Table1Row(label=p, cells={sp: lst for sp, lst in zip(SPATIAL_COLUMNS, lists)})
        row.cells["Marginal"] = coded[p]
        if any(lists):
            table = category_ratios(lists, config.coding.row_convention, scope=p)
            ratios.append(table)
            row.ratios = table.display_text()
        rows.append(row)

    rows.append(Table1Row(
        label=CLUSTERS_ROW,
        cells={
            PERIPHERY: coded[PERIPHERY],
            EPICENTRE: coded[EPICENTRE],
            "Marginal": coded[f"{CLUSTERS_ROW}|Marginal"],
        },
    ))

    bottom = Table1Row(label=RATIOS_ROW)
    for sp in SPATIAL_COLUMNS:
        lists = [coded[cell_label(p, sp)] for p in names]
        if any(lists):
            table = category_ratios(lists, config.coding.column_convention, scope=sp)
            ratios.append(table)
            bottom.cells[sp] = table.display_text()
    rows.append(bottom)

    table1 = Table1(
        rows=rows,
        top_k=config.salience.top_k,
        row_convention=config.coding.row_convention.value,
        column_convention=config.coding.column_convention.value,
    )
    return table1, ratios


# ---------------------------------------------------------------------------
# Public entry point
# ---------------------------------------------------------------------------

def run_pipeline(
    config: PipelineConfig,
    progress: Callable[[str], None] | None = None,
) -> PipelineRun:
    """
    Execute every stage and write the artifacts.

    Parameters
    ----------
    config   : validated PipelineConfig (see config.load_config)
    progress : optional callback receiving each stage name as it starts

    Returns
    -------
    PipelineRun with the manifest and the intermediate tables.
    """
    notify = progress or (lambda _name: None)
    config_hash = config.config_hash()
    header = provenance_header(config_hash, config.seed)
    out_dir = Path(config.out_dir)
    run = PipelineRun(config_hash=config_hash, seed=config.seed, out_dir=out_dir)

    notify("ingest")
    with stage("ingest"):
        records, run.ingest = ingest_records(config)

    notify("textproc")
    with stage("textproc"):
        run.vocabulary, terms = build_vocabulary(config, records)

    notify("geonorm")
    with stage("geonorm"):
        labeled, run.shares = locate_records(config, records)

    notify("temporal")
    with stage("temporal"):
        run.temporal = cluster_regions(config, labeled)

    notify("salience")
    with stage("salience"):
        docs = term_documents(labeled, terms, run.temporal.spatial)
        run.salience, run.top = score_terms(config, docs)

    notify("coding")
    with stage("coding"):
        run.table1, run.ratios = code_terms(config, run.top)

    notify("report")
    with stage("report"):
        out_dir.mkdir(parents=True, exist_ok=True)
        t = run.temporal
        artifacts = [
            write_csv(series_frame(t.supra_by_type, t.fine_by_type), out_dir / "series.csv", header),
            write_csv(clusters_frame(t.clusters, t.spatial), out_dir / "clusters.csv", header),
            write_csv(salience_frame(run.salience), out_dir / "salience.csv", header),
            write_csv(ratio_frame(run.ratios), out_dir / "ratios.csv", header),
            write_text(emit_table1(run.table1, config_hash, config.seed), out_dir / "table1.md"),
        ]
        vocab_path = out_dir / "vocabulary.tsv"
        save_vocabulary(run.vocabulary, vocab_path, header=header)
        artifacts.append(vocab_path)
        plots = emit_series_plotdata(t.supra_all, t.supra_by_type, t.fine_all, t.clusters, t.spatial)
        for name, frame in plots.items():
            artifacts.append(write_csv(frame, out_dir / name, header))
        run.manifest = write_manifest(out_dir, artifacts, config_hash, config.seed)
    return run
