from __future__ import annotations

import json
from pathlib import Path

import pytest

from spatiotemporal.analyzers.geonorm import load_hierarchy

FIXTURES = Path(__file__).resolve().parent.parent / "data" / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def hierarchy():
    return load_hierarchy(FIXTURES / "gazetteer.tsv", FIXTURES / "supra_regions.tsv")


@pytest.fixture
def write_jsonl(tmp_path):
    """Write dicts (or raw strings) as one JSON line each; returns the path."""

    def _write(rows, name="shard.jsonl"):
        path = tmp_path / name
        lines = [r if isinstance(r, str) else json.dumps(r) for r in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return _write


def write_config(directory: Path, corpus_glob: str, out_dir: Path, **overrides) -> Path:
    """Config TOML pointing at the shipped fixture tables; overrides are raw TOML lines per section."""
    sections = {
        "clustering": ["restarts = 5"],
        "salience": [],
        "ngrams": [],
    }
    for section, lines in overrides.items():
        sections.setdefault(section, []).extend(lines)
    body = [
        "seed = 42",
        "[input]",
        f"paths = [{json.dumps(corpus_glob)}]",
        "[cleaning]",
        f"rules = {json.dumps(str(FIXTURES / 'cleaning_rules.toml'))}",
        "[geo]",
        f"gazetteer = {json.dumps(str(FIXTURES / 'gazetteer.tsv'))}",
        f"supra_regions = {json.dumps(str(FIXTURES / 'supra_regions.tsv'))}",
        "[coding]",
        f"codebook = {json.dumps(str(FIXTURES / 'codebook.tsv'))}",
        "[output]",
        f"dir = {json.dumps(str(out_dir))}",
    ]
    for section, lines in sections.items():
        body.append(f"[{section}]")
        body.extend(lines)
    path = directory / "config.toml"
    path.write_text("\n".join(body) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def make_config():
    return write_config


# ---------------------------------------------------------------------------
# Synthetic end-to-end runs (generated once per session)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def synthetic_plan():
    from spatiotemporal.synthetic import SyntheticPlan

    return SyntheticPlan(n_mapped=100_000, seed=7)


@pytest.fixture(scope="session")
def synthetic_corpus(tmp_path_factory, synthetic_plan) -> Path:
    from spatiotemporal.synthetic import write_corpus

    directory = tmp_path_factory.mktemp("corpus")
    write_corpus(directory / "corpus.jsonl", synthetic_plan, shards=3)
    return directory


@pytest.fixture(scope="session")
def synthetic_runs(tmp_path_factory, synthetic_corpus):
    """Two independent pipeline runs over the same corpus, into different directories."""
    from spatiotemporal.config import load_config
    from spatiotemporal.pipeline import run_pipeline

    runs = []
    for name in ("first", "second"):
        directory = tmp_path_factory.mktemp(name)
        path = write_config(directory, str(synthetic_corpus / "*.jsonl"), directory / "out")
        runs.append(run_pipeline(load_config(path)))
    return runs
