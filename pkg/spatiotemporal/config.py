"""
Pipeline configuration.

One TOML file describes a run. Relative paths resolve against the config
file's directory; every referenced table is loaded (and so validated) here,
before any stage runs.

Environment overrides (a local .env file is honoured):
    SPATIOTEMPORAL_SEED       integer seed
    SPATIOTEMPORAL_OUT_DIR    output directory
Precedence is CLI flag > environment > file.
"""

from __future__ import annotations

import hashlib
import json
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

from dotenv import load_dotenv

from spatiotemporal.analyzers.coding import Codebook, Convention, load_codebook
from spatiotemporal.analyzers.geonorm import RegionHierarchy, load_hierarchy
from spatiotemporal.analyzers.temporal import PeriodConfig
from spatiotemporal.analyzers.textproc import CleaningRules
from spatiotemporal.data_access import FieldMapping, expand_inputs
from spatiotemporal.errors import ConfigError

load_dotenv()

ENV_SEED = "SPATIOTEMPORAL_SEED"
ENV_OUT_DIR = "SPATIOTEMPORAL_OUT_DIR"


# ---------------------------------------------------------------------------
# Sections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InputConfig:
    paths: tuple[Path, ...]
    fields: FieldMapping = field(default_factory=FieldMapping)
    on_error: str = "raise"
    languages: tuple[str, ...] = ()


@dataclass(frozen=True)
class NGramConfig:
    pmi_mass: float = 0.75
    freq_mass: float = 0.15
    pool_orders: bool = False


@dataclass(frozen=True)
class ClusteringConfig:
    k_min: int = 2
    k_max: int = 8
    restarts: int = 20
    max_iter: int = 300
    tol: float = 1e-6
    smoothing_window: int = 1
    use_residuals: bool = False
    epicentre_period: str = "Initial"


@dataclass(frozen=True)
class SalienceConfig:
    beta: float = 1.0
    min_count: int = 5
    top_k: int = 10
    count_unit: str = "token"


@dataclass(frozen=True)
class CodingConfig:
    codebook: Path
    row_convention: Convention = Convention.INCLUDE_UNCODED
    column_convention: Convention = Convention.EXCLUDE_UNCODED


@dataclass
class PipelineConfig:
    input: InputConfig
    gazetteer: Path
    supra_regions: Path
    coding: CodingConfig
    out_dir: Path
    cleaning_rules: Path | None = None
    periods: PeriodConfig = field(default_factory=PeriodConfig)
    ngrams: NGramConfig = field(default_factory=NGramConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    salience: SalienceConfig = field(default_factory=SalienceConfig)
    seed: int = 0
    source: Path | None = None

    # Loaded tables, filled by validate()
    rules: CleaningRules = field(default_factory=CleaningRules, repr=False)
    hierarchy: RegionHierarchy | None = field(default=None, repr=False)
    codebook: Codebook | None = field(default=None, repr=False)

    def validate(self) -> "PipelineConfig":
        """Range-check settings and load every referenced table."""
        _check(0.0 < self.ngrams.pmi_mass <= 1.0, "ngrams.pmi_mass must be in (0, 1]")
        _check(0.0 < self.ngrams.freq_mass <= 1.0, "ngrams.freq_mass must be in (0, 1]")
        c = self.clustering
        _check(2 <= c.k_min <= c.k_max, "clustering.k_min must be >= 2 and <= k_max")
        _check(c.restarts >= 1 and c.max_iter >= 1, "clustering.restarts and max_iter must be >= 1")
        _check(c.tol >= 0, "clustering.tol must be >= 0")
        _check(c.smoothing_window >= 1, "clustering.smoothing_window must be >= 1")
        _check(c.epicentre_period in self.periods.names,
               f"clustering.epicentre_period {c.epicentre_period!r} is not a configured period")
        s = self.salience
        _check(s.beta > 0, "salience.beta must be > 0")
        _check(s.min_count >= 1 and s.top_k >= 1, "salience.min_count and top_k must be >= 1")
        _check(s.count_unit in ("token", "document"), "salience.count_unit must be token or document")
        _check(self.input.on_error in ("raise", "skip"), "input.on_error must be raise or skip")
        _check(bool(self.input.paths), "input.paths matched no files")

        for path in self.input.paths:
            _require_file(path, "input")
        if self.cleaning_rules is not None:
            _require_file(self.cleaning_rules, "cleaning.rules")
            try:
                raw = tomllib.loads(self.cleaning_rules.read_text(encoding="utf-8"))
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{self.cleaning_rules}: {exc}") from exc
            self.rules = CleaningRules.from_dict(raw)
        _require_file(self.gazetteer, "geo.gazetteer")
        _require_file(self.supra_regions, "geo.supra_regions")
        self.hierarchy = load_hierarchy(self.gazetteer, self.supra_regions)
        _require_file(self.coding.codebook, "coding.codebook")
        self.codebook = load_codebook(self.coding.codebook)
        return self

    def settings(self) -> dict[str, Any]:
        """Semantic settings as plain JSON types (paths and output dir excluded)."""
        return {
            "seed": self.seed,
            "fields": asdict(self.input.fields),
            "on_error": self.input.on_error,
            "languages": list(self.input.languages),
            "periods": [[n, s.isoformat()] for n, s in self.periods.periods],
            "period_end": self.periods.end.isoformat(),
            "ngrams": asdict(self.ngrams),
            "clustering": asdict(self.clustering),
            "salience": asdict(self.salience),
            "row_convention": self.coding.row_convention.value,
            "column_convention": self.coding.column_convention.value,
        }

    def config_hash(self) -> str:
        """SHA-256 over the settings and the content of every referenced file."""
        referenced = [*self.input.paths, self.gazetteer, self.supra_regions, self.coding.codebook]
        if self.cleaning_rules is not None:
            referenced.append(self.cleaning_rules)
        payload = {
            "settings": self.settings(),
            "files": sorted(file_sha256(p) for p in referenced),
        }
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _check(ok: bool, message: str) -> None:
    if not ok:
        raise ConfigError(message)


def _require_file(path: Path, key: str) -> None:
    if not path.is_file():
        raise ConfigError(f"{key}: file not found: {path}")


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _section(raw: Mapping, name: str) -> dict:
    value = raw.get(name, {})
    if not isinstance(value, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    return dict(value)


def _build(cls, raw: Mapping, section: str):
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def _apply_overrides(raw: Mapping[str, Any], overrides: Mapping[str, Mapping[str, Any]] | None) -> dict:
    merged = dict(raw)
    for section, values in (overrides or {}).items():
        if values:
            merged[section] = {**_section(raw, section), **values}
    return merged


def config_from_dict(
    raw: Mapping[str, Any],
    base_dir: str | Path = ".",
    seed: int | None = None,
    out_dir: str | Path | None = None,
    overrides: Mapping[str, Mapping[str, Any]] | None = None,
) -> PipelineConfig:
    """
    Build and validate a PipelineConfig from parsed TOML.

    overrides replaces individual keys per section (e.g. {"clustering": {"k_max": 5}})
    before validation; the CLI uses it for its per-command flags.
    """
    base = Path(base_dir)
    raw = _apply_overrides(raw, overrides)

    def resolve(value: str | Path) -> Path:
        path = Path(value)
        return path if path.is_absolute() else base / path

    inp = _section(raw, "input")
    patterns = inp.get("paths") or []
    if isinstance(patterns, str):
        patterns = [patterns]
    input_cfg = InputConfig(
        paths=tuple(expand_inputs(resolve(p) for p in patterns)),
        fields=FieldMapping.from_dict(inp.get("fields")),
        on_error=str(inp.get("on_error", "raise")),
        languages=tuple(str(x) for x in inp.get("languages", [])),
    )

    geo = _section(raw, "geo")
    if "gazetteer" not in geo or "supra_regions" not in geo:
        raise ConfigError("[geo] needs both 'gazetteer' and 'supra_regions'")

    coding = _section(raw, "coding")
    if "codebook" not in coding:
        raise ConfigError("[coding] needs 'codebook'")
    try:
        coding_cfg = CodingConfig(
            codebook=resolve(coding["codebook"]),
            row_convention=Convention(coding.get("row_convention", Convention.INCLUDE_UNCODED)),
            column_convention=Convention(coding.get("column_convention", Convention.EXCLUDE_UNCODED)),
        )
    except ValueError as exc:
        raise ConfigError(f"[coding] {exc}") from None

    cleaning = _section(raw, "cleaning")
    env_seed = os.environ.get(ENV_SEED)
    if seed is None and env_seed:
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"{ENV_SEED} must be an integer, got {env_seed!r}") from None
    if out_dir is None:
        out_dir = os.environ.get(ENV_OUT_DIR)
    out_path = Path(out_dir) if out_dir is not None else resolve(_section(raw, "output").get("dir", "output"))

    config = PipelineConfig(
        input=input_cfg,
        gazetteer=resolve(geo["gazetteer"]),
        supra_regions=resolve(geo["supra_regions"]),
        coding=coding_cfg,
        out_dir=out_path,
        cleaning_rules=resolve(cleaning["rules"]) if cleaning.get("rules") else None,
        periods=PeriodConfig.from_dict(_section(raw, "periods")),
        ngrams=_build(NGramConfig, _section(raw, "ngrams"), "ngrams"),
        clustering=_build(ClusteringConfig, _section(raw, "clustering"), "clustering"),
        salience=_build(SalienceConfig, _section(raw, "salience"), "salience"),
        seed=int(seed if seed is not None else raw.get("seed", 0)),
    )
    return config.validate()


def load_config(
    path: str | Path,
    seed: int | None = None,
    out_dir: str | Path | None = None,
    overrides: Mapping[str, Mapping[str, Any]] | None = None,
) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    config = config_from_dict(raw, base_dir=path.parent, seed=seed, out_dir=out_dir, overrides=overrides)
    config.source = path
    return config
