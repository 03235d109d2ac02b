"""
Artifact renderer.

Turns computed tables into the files a run leaves behind: CSVs with a
provenance comment line, the Markdown replica of the term table (via the
Jinja2 template next to this file), the plot-ready series files and the
manifest.

Public API:
    emit_table1(table, config_hash, seed) -> str
    emit_series_plotdata(...) -> dict[name, DataFrame]
    write_csv(frame, path, header)
    write_manifest(out_dir, artifacts, config_hash, seed) -> dict
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import pandas as pd

try:
    from jinja2 import Environment, FileSystemLoader, StrictUndefined
    _HAS_JINJA = True
except ImportError:
    _HAS_JINJA = False

from spatiotemporal.analyzers.coding import CodedTerm
from spatiotemporal.analyzers.temporal import ClusterResult, TimeSeriesPanel
from spatiotemporal.config import file_sha256

logger = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Template location
# ---------------------------------------------------------------------------
_TEMPLATE_DIR = Path(__file__).parent
_TEMPLATE_NAME = "table1.md.j2"

EMPTY_CELL = "—"
TABLE1_COLUMNS = ("Periphery", "Epicentre", "Marginal", "Ratios")
_DATE_FORMAT = "%Y-%m-%d"


def provenance_header(config_hash: str, seed: int) -> str:
    return f"config_sha256={config_hash} seed={seed}"


# ---------------------------------------------------------------------------
# Table 1
# ---------------------------------------------------------------------------

@dataclass
class Table1Row:
    label: str
    cells: dict[str, Sequence[CodedTerm] | None] = field(default_factory=dict)
    ratios: str = ""


@dataclass
class Table1:
    rows: list[Table1Row]
    top_k: int = 10
    row_convention: str = "include_uncoded"
    column_convention: str = "exclude_uncoded"
    title: str = "Distinctive terms by period and spatial cluster"


def _format_terms(coded: Sequence[CodedTerm] | None, where: str) -> str:
    if not coded:
        logger.warning("table1: empty cell %s", where)
        return EMPTY_CELL
    return ", ".join(f"{term.replace('|', '/')} ({category.value})" for term, category in coded)


def emit_table1(table: Table1, config_hash: str, seed: int) -> str:
    """
    Render the term table as Markdown.

    Parameters
    ----------
    table : Table1 with one row per period, then the "Clusters" and "Ratios" rows.
            A term cell of None or [] renders as an em dash. The Ratios column
            is filled from Table1Row.ratios; the Ratios row carries its values
            in the Periphery/Epicentre cells as pre-formatted text.

    Returns
    -------
    str: complete Markdown document, first line is a provenance comment.
    """
    if not _HAS_JINJA:
        raise ImportError("jinja2 is required for Table 1 rendering. Run: pip install jinja2>=3.1.0")

    env = Environment(
        loader=FileSystemLoader(str(_TEMPLATE_DIR)),
        autoescape=False,
        undefined=StrictUndefined,
        keep_trailing_newline=True,
    )
    template = env.get_template(_TEMPLATE_NAME)

    views = []
    for row in table.rows:
        cells = []
        for column in TABLE1_COLUMNS[:-1]:
            value = row.cells.get(column)
            if isinstance(value, str):
                cells.append(value or " ")
            elif column not in row.cells:
                cells.append(" ")
            else:
                cells.append(_format_terms(value, f"{row.label}/{column}"))
        cells.append(row.ratios or " ")
        views.append({"label": row.label, "cells": cells})

    return template.render(
        config_hash=config_hash,
        seed=seed,
        title=table.title,
        top_k=table.top_k,
        row_convention=table.row_convention,
        column_convention=table.column_convention,
        columns=TABLE1_COLUMNS,
        rows=views,
    )


# ---------------------------------------------------------------------------
# Plot data
# ---------------------------------------------------------------------------

def _long(panel: TimeSeriesPanel, group_name: str) -> pd.DataFrame:
    long = panel.to_long().rename(columns={"group": group_name})
    long["date"] = pd.to_datetime(long["date"]).dt.strftime(_DATE_FORMAT)
    return long


def emit_series_plotdata(
    supra_all: TimeSeriesPanel,
    supra_by_type: TimeSeriesPanel,
    fine_all: TimeSeriesPanel,
    clusters: ClusterResult,
    spatial: Mapping[str, str],
) -> dict[str, pd.DataFrame]:
    """
    Frames for the three series plots.

    supra_normalized.csv: normalized share per supra-region and day (both tweet types together)
    supra_residual.csv: normalized and residual series per supra-region, tweet type and day
    fine_clusters.csv: normalized series per fine region with its cluster id and spatial label
    """
    a = _long(supra_all, "supra_region")[["supra_region", "date", "count", "normalized"]]
    b = _long(supra_by_type, "supra_region")[
        ["supra_region", "tweet_type", "date", "count", "normalized", "residual"]
    ]
    c = _long(fine_all, "fine_region")[["fine_region", "date", "count", "normalized"]]
    c["cluster"] = c["fine_region"].map(clusters.assignment)
    c["spatial"] = c["fine_region"].map(spatial)
    return {
        "supra_normalized.csv": a,
        "supra_residual.csv": b,
        "fine_clusters.csv": c,
    }


def series_frame(*panels: TimeSeriesPanel) -> pd.DataFrame:
    """series.csv layout: level, group, tweet_type, date, count, normalized, residual."""
    frames = []
    for panel in panels:
        long = _long(panel, "group")
        long.insert(0, "level", panel.level)
        frames.append(long)
    return pd.concat(frames, ignore_index=True)


def clusters_frame(result: ClusterResult, spatial: Mapping[str, str]) -> pd.DataFrame:
    rows = [
        {
            "group": group,
            "cluster": label,
            "spatial": spatial[group],
            "k": result.k,
            "silhouette": result.silhouette,
            "seed": result.seed,
        }
        for group, label in sorted(result.assignment.items())
    ]
    return pd.DataFrame(rows, columns=["group", "cluster", "spatial", "k", "silhouette", "seed"])


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

def write_csv(frame: pd.DataFrame, path: str | Path, header: str) -> Path:
    """UTF-8 CSV whose first line is "# <header>", followed by the column header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {header}\n")
        frame.to_csv(fh, index=False, lineterminator="\n")
    return path


def write_text(text: str, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def write_manifest(
    out_dir: str | Path,
    artifacts: Sequence[str | Path],
    config_hash: str,
    seed: int,
) -> dict:
    """manifest.json: every artifact's file name and SHA-256, plus config hash and seed."""
    out_dir = Path(out_dir)
    manifest = {
        "config_sha256": config_hash,
        "seed": seed,
        "artifacts": [
            {"name": Path(p).name, "sha256": file_sha256(out_dir / Path(p).name)}
            for p in sorted(artifacts, key=lambda p: Path(p).name)
        ],
    }
    write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", out_dir / "manifest.json")
    return manifest
