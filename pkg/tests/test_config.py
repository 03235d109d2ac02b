from __future__ import annotations

import pytest

from spatiotemporal.analyzers.coding import Convention
from spatiotemporal.config import ENV_OUT_DIR, ENV_SEED, config_from_dict, load_config
from spatiotemporal.errors import ConfigError


@pytest.fixture
def corpus(write_jsonl):
    return write_jsonl([{"id": "1", "created_at": "2020-03-01T00:00:00Z", "text": "ciao"}], "corpus.jsonl")


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    monkeypatch.delenv(ENV_SEED, raising=False)
    monkeypatch.delenv(ENV_OUT_DIR, raising=False)


def _raw(fixtures_dir, corpus, **sections):
    raw = {
        "seed": 3,
        "input": {"paths": [str(corpus)]},
        "geo": {
            "gazetteer": str(fixtures_dir / "gazetteer.tsv"),
            "supra_regions": str(fixtures_dir / "supra_regions.tsv"),
        },
        "coding": {"codebook": str(fixtures_dir / "codebook.tsv")},
        "output": {"dir": "out"},
    }
    raw.update(sections)
    return raw


def test_shipped_fixture_config_shape(fixtures_dir, corpus, make_config, tmp_path):
    config = load_config(make_config(tmp_path, str(corpus), tmp_path / "out"))
    assert config.seed == 42
    assert config.periods.names == ["Pre", "Initial", "Northern", "National", "Prolongation", "Relaxing"]
    assert config.hierarchy is not None and config.codebook is not None
    assert config.rules.alias_map["covid-19"] == "covid19"
    assert config.clustering.restarts == 5
    assert config.coding.row_convention is Convention.INCLUDE_UNCODED
    assert config.coding.column_convention is Convention.EXCLUDE_UNCODED


def test_missing_gazetteer_names_the_path(fixtures_dir, corpus, tmp_path):
    missing = tmp_path / "nowhere" / "gazetteer.tsv"
    raw = _raw(fixtures_dir, corpus)
    raw["geo"]["gazetteer"] = str(missing)
    with pytest.raises(ConfigError, match="gazetteer"):
        config_from_dict(raw, base_dir=tmp_path)
    with pytest.raises(ConfigError) as exc:
        config_from_dict(raw, base_dir=tmp_path)
    assert str(missing) in str(exc.value)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.toml")


def test_unparseable_config_file(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("seed = = 1\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


def test_input_glob_matching_nothing(fixtures_dir, corpus, tmp_path):
    raw = _raw(fixtures_dir, corpus, input={"paths": [str(tmp_path / "none-*.jsonl")]})
    with pytest.raises(ConfigError, match="matched no files"):
        config_from_dict(raw, base_dir=tmp_path)


@pytest.mark.parametrize("section", [
    {"ngrams": {"pmi_mass": 0.0}},
    {"clustering": {"k_min": 1}},
    {"clustering": {"k_min": 5, "k_max": 3}},
    {"clustering": {"epicentre_period": "Summer"}},
    {"clustering": {"clusters": 3}},
    {"salience": {"count_unit": "sentence"}},
    {"salience": {"beta": 0}},
    {"coding": {"codebook": "x", "row_convention": "sometimes"}},
    {"input": {"paths": ["x"], "on_error": "ignore"}},
])
def test_invalid_settings_rejected(fixtures_dir, corpus, tmp_path, section):
    raw = _raw(fixtures_dir, corpus)
    for key, value in section.items():
        merged = dict(raw.get(key, {}))
        merged.update(value)
        if key == "input":
            merged["paths"] = [str(corpus)]
        if key == "coding":
            merged["codebook"] = str(fixtures_dir / "codebook.tsv")
        raw[key] = merged
    with pytest.raises(ConfigError):
        config_from_dict(raw, base_dir=tmp_path)


def test_relative_paths_resolve_against_config_dir(fixtures_dir, corpus, tmp_path):
    config = config_from_dict(_raw(fixtures_dir, corpus), base_dir=tmp_path)
    assert config.out_dir == tmp_path / "out"


def test_seed_and_out_dir_precedence(fixtures_dir, corpus, tmp_path, monkeypatch):
    raw = _raw(fixtures_dir, corpus)
    assert config_from_dict(raw, base_dir=tmp_path).seed == 3

    monkeypatch.setenv(ENV_SEED, "9")
    monkeypatch.setenv(ENV_OUT_DIR, str(tmp_path / "env-out"))
    config = config_from_dict(raw, base_dir=tmp_path)
    assert config.seed == 9
    assert config.out_dir == tmp_path / "env-out"

    config = config_from_dict(raw, base_dir=tmp_path, seed=11, out_dir="cli-out")
    assert config.seed == 11
    assert str(config.out_dir) == "cli-out"


def test_section_overrides_replace_single_keys(fixtures_dir, corpus, tmp_path, write_jsonl):
    raw = _raw(fixtures_dir, corpus, clustering={"restarts": 4, "k_max": 6})
    other = write_jsonl([{"id": "2", "created_at": "2020-03-02T00:00:00Z", "text": "ciao"}], "other.jsonl")

    config = config_from_dict(raw, base_dir=tmp_path, overrides={
        "clustering": {"k_min": 3, "k_max": 3},
        "input": {"paths": [str(other)]},
    })
    assert (config.clustering.k_min, config.clustering.k_max, config.clustering.restarts) == (3, 3, 4)
    assert [p.name for p in config.input.paths] == ["other.jsonl"]
    assert raw["clustering"] == {"restarts": 4, "k_max": 6}

    with pytest.raises(ConfigError, match="k_min"):
        config_from_dict(raw, base_dir=tmp_path, overrides={"clustering": {"k_min": 7}})


def test_bad_env_seed(fixtures_dir, corpus, tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_SEED, "many")
    with pytest.raises(ConfigError, match=ENV_SEED):
        config_from_dict(_raw(fixtures_dir, corpus), base_dir=tmp_path)


def test_config_hash(fixtures_dir, corpus, tmp_path):
    raw = _raw(fixtures_dir, corpus)
    base = config_from_dict(raw, base_dir=tmp_path).config_hash()
    assert len(base) == 64
    assert config_from_dict(raw, base_dir=tmp_path, out_dir=tmp_path / "elsewhere").config_hash() == base
    assert config_from_dict(raw, base_dir=tmp_path, seed=4).config_hash() != base

    corpus.write_text(corpus.read_text(encoding="utf-8") + "\n", encoding="utf-8")
    assert config_from_dict(raw, base_dir=tmp_path).config_hash() != base
