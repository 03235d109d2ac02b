"""
CLI for the spatio-temporal corpus pipeline.

Usage:
    python -m spatiotemporal run     --config PATH [--out-dir DIR] [--seed N]
    python -m spatiotemporal ingest  --config PATH [--input GLOB ...] [--out FILE | --out-dir DIR]
    python -m spatiotemporal geonorm --config PATH [--gazetteer FILE] [--report-unmapped] [--top N]
    python -m spatiotemporal cluster --config PATH [--k-min N] [--k-max N] [--out-dir DIR] [--seed N]

Per-command flags override the matching config values.

Common options:
    --quiet             Suppress progress output
    --verbose           Debug logging

Exit status is 0 on success, 1 when a stage fails (the stage is named on
stderr) and 2 for an invalid config.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from spatiotemporal.errors import ConfigError, CorpusError, StageError

_COMMANDS = ("run", "ingest", "geonorm", "cluster")


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _log(msg: str, quiet: bool) -> None:
    if not quiet:
        print(msg, flush=True)


def _progress(step: str, quiet: bool) -> None:
    _log(f"  [{step}]", quiet)


def _fail(msg: str, code: int = 1) -> None:
    print(f"\nERROR {msg}", file=sys.stderr)
    sys.exit(code)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m spatiotemporal",
        description="Spatio-temporal comparison of a geolocated tweet corpus",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", required=True, help="Pipeline TOML config")
    common.add_argument("--quiet", action="store_true", help="Suppress progress messages")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    p = sub.add_parser("run", parents=[common], help="Run every stage and write all artifacts")
    p.add_argument("--out-dir", metavar="DIR", help="Output directory (overrides config and env)")
    p.add_argument("--seed", type=int, metavar="N", help="Clustering seed (overrides config and env)")

    p = sub.add_parser("ingest", parents=[common], help="Parse, dedupe and window; write normalized records")
    p.add_argument("--input", action="append", metavar="GLOB", help="Input shard glob (repeatable; replaces [input] paths)")
    p.add_argument("--out", metavar="FILE", help="Normalized records file (default <out-dir>/records.jsonl)")
    p.add_argument("--out-dir", metavar="DIR", help="Output directory (overrides config and env)")

    p = sub.add_parser("geonorm", parents=[common], help="Print supra-region shares and unmapped strings")
    p.add_argument("--gazetteer", metavar="FILE", help="Gazetteer TSV (replaces [geo] gazetteer)")
    p.add_argument("--report-unmapped", action="store_true", help="List the most frequent unmapped strings")
    p.add_argument("--top", type=int, default=20, metavar="N", help="Unmapped strings to list (default 20)")

    p = sub.add_parser("cluster", parents=[common], help="Cluster regional series; write clusters.csv")
    p.add_argument("--k-min", type=int, metavar="N", help="Smallest k tried (replaces [clustering] k_min)")
    p.add_argument("--k-max", type=int, metavar="N", help="Largest k tried (replaces [clustering] k_max)")
    p.add_argument("--out-dir", metavar="DIR", help="Output directory (overrides config and env)")
    p.add_argument("--seed", type=int, metavar="N", help="Clustering seed (overrides config and env)")
    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _cmd_run(config, quiet: bool) -> None:
    from spatiotemporal.pipeline import run_pipeline

    run = run_pipeline(config, progress=lambda name: _progress(f"stage: {name}", quiet))
    s = run.ingest
    _log(f"\n  Records: {s.read:,} read | {s.duplicates:,} duplicates | "
         f"{s.out_of_window:,} outside window | {s.kept:,} kept", quiet)
    clusters = run.temporal.clusters
    _log(f"  Clusters: k={clusters.k}  silhouette={clusters.silhouette:.3f}", quiet)
    _log(f"\nArtifacts written to: {run.out_dir}", quiet)
    for item in run.manifest["artifacts"]:
        _log(f"  {item['name']:<28} {item['sha256'][:12]}", quiet)


def _cmd_ingest(config, quiet: bool, out: str | None) -> None:
    from spatiotemporal.data_access import write_records
    from spatiotemporal.pipeline import ingest_records, stage

    _progress("reading shards", quiet)
    with stage("ingest"):
        records, stats = ingest_records(config)
        out_path = Path(out) if out else Path(config.out_dir) / "records.jsonl"
        n = write_records(records, out_path)
    _log(f"\n  {stats.read:,} read, {stats.duplicates:,} duplicates, "
         f"{stats.out_of_window:,} outside window, {stats.language_filtered:,} language-filtered", quiet)
    _log(f"  {n:,} records written to: {out_path}", quiet)


def _cmd_geonorm(config, quiet: bool, top: int, report: bool) -> None:
    from spatiotemporal.analyzers.geonorm import report_unmapped
    from spatiotemporal.pipeline import ingest_records, locate_records, stage

    with stage("ingest"):
        records, _ = ingest_records(config)
    with stage("geonorm"):
        labeled, shares = locate_records(config, records)
        unmapped = report_unmapped(labeled["user_location"], config.hierarchy, top=top)

    print("\nSupra-region shares (over mapped records):")
    for row in shares.itertuples(index=False):
        share = "" if row.supra_region == "Unmapped" else f"{row.share:6.1%}"
        print(f"  {row.supra_region:<10} {row.count:>9,}  {share}")
    if report and unmapped:
        print(f"\nTop {len(unmapped)} unmapped location strings:")
        for raw, n in unmapped:
            print(f"  {n:>7,}  {raw}")


def _cmd_cluster(config, quiet: bool) -> None:
    from spatiotemporal.pipeline import cluster_regions, ingest_records, locate_records, stage
    from spatiotemporal.report.renderer import clusters_frame, provenance_header, write_csv

    with stage("ingest"):
        records, _ = ingest_records(config)
    with stage("geonorm"):
        labeled, _ = locate_records(config, records)
    _progress("clustering regional series", quiet)
    with stage("temporal"):
        result = cluster_regions(config, labeled)
    with stage("report"):
        header = provenance_header(config.config_hash(), config.seed)
        out_path = write_csv(
            clusters_frame(result.clusters, result.spatial), Path(config.out_dir) / "clusters.csv", header,
        )

    c = result.clusters
    _log("\n  Silhouette by k: " + ", ".join(f"{k}:{v:.3f}" for k, v in c.silhouette_by_k.items()), quiet)
    _log(f"  Selected k={c.k}", quiet)
    for group in sorted(c.assignment):
        _log(f"    {group:<24} cluster {c.assignment[group]}  {result.spatial[group]}", quiet)
    _log(f"\n  Written: {out_path}", quiet)


# ---------------------------------------------------------------------------
# Main
# ---------------------------------------------------------------------------

def _overrides(args: argparse.Namespace) -> dict[str, dict]:
    """Config sections replaced by per-command flags; CLI paths are relative to the working directory."""
    overrides: dict[str, dict] = {}
    if getattr(args, "input", None):
        overrides["input"] = {"paths": [str(Path(p).absolute()) for p in args.input]}
    if getattr(args, "gazetteer", None):
        overrides["geo"] = {"gazetteer": str(Path(args.gazetteer).absolute())}
    clustering = {k: getattr(args, k) for k in ("k_min", "k_max") if getattr(args, k, None) is not None}
    if clustering:
        overrides["clustering"] = clustering
    return overrides


def main(argv: list[str] | None = None) -> None:
    if hasattr(sys.stdout, "reconfigure"):
        sys.stdout.reconfigure(encoding="utf-8", errors="replace")

    args = _build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)

    from spatiotemporal.config import load_config

    _log("\nSpatio-temporal corpus pipeline", args.quiet)
    _log("=" * 31, args.quiet)
    _progress(f"loading config {args.config}", args.quiet)
    try:
        config = load_config(
            args.config,
            seed=getattr(args, "seed", None),
            out_dir=getattr(args, "out_dir", None),
            overrides=_overrides(args),
        )
    except ConfigError as exc:
        _fail(f"[config]: {exc}", code=2)

    try:
        if args.command == "run":
            _cmd_run(config, args.quiet)
        elif args.command == "ingest":
            _cmd_ingest(config, args.quiet, args.out)
        elif args.command == "geonorm":
            _cmd_geonorm(config, args.quiet, args.top, args.report_unmapped)
        elif args.command == "cluster":
            _cmd_cluster(config, args.quiet)
    except StageError as exc:
        _fail(f"[{exc.stage}]: {exc.cause}")
    except CorpusError as exc:
        _fail(f": {exc}")

    _log("\nDone.", args.quiet)


if __name__ == "__main__":
    main()
