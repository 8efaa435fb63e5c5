"""Run configuration: one YAML file, schema-checked.

Example::

    schema_version: 1
    output_dir: out/analysis
    seeds: [0, 1, 2, 3, 4]
    protocol: {q: 0.9, val_user_fraction: 0.1, split_seed: 0}
    rules: {ngrams: [2, 3], min_support: 5, min_confidence: 0.1}
    models:
      attention: {max_epochs: 100, patience: 5}
      recurrent: {}
    metrics: {k: 10}
    datasets:
      - name: beauty
        path: data/ratings_Beauty.csv
        schema: {user: 0, item: 1, timestamp: 3, delimiter: ","}
        preprocess: {k_core: 5}
      - name: markov
        synth: {kind: markov, seed: 0}
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from seqstruct.data import PreprocessConfig, Schema
from seqstruct.models import ModelHParams
from seqstruct.synth import SynthConfig

SCHEMA_VERSION = 1
OUTPUT_ENV = "SEQSTRUCT_OUTPUT"
DEFAULT_OUTPUT = "seqstruct-out"


class ConfigError(ValueError):
    pass


def _build(cls, raw, where: str):
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(raw).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class ProtocolConfig:
    q: float = 0.9
    val_user_fraction: float = 0.1
    split_seed: int = 0


@dataclass
class RulesConfig:
    ngrams: list[int] = field(default_factory=lambda: [2, 3])
    min_support: int = 5
    min_confidence: float = 0.1

    def __post_init__(self):
        if any(n not in (2, 3) for n in self.ngrams):
            raise ValueError(f"ngrams must be drawn from (2, 3), got {self.ngrams}")


@dataclass
class MetricsConfig:
    k: int = 10
    accuracy_weak_above: float = -0.10
    jaccard_weak_above: float = 1.0 / 3.0
    rules_weak_above: float = -0.90
    accuracy_strong_at_most: float = -0.30


@dataclass
class DatasetConfig:
    name: str
    path: str | None = None
    synth: SynthConfig | None = None
    schema: Schema = field(default_factory=Schema)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)


@dataclass
class RunConfig:
    datasets: list[DatasetConfig]
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    rules: RulesConfig = field(default_factory=RulesConfig)
    models: dict[str, ModelHParams] = field(default_factory=dict)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    output_dir: str | None = None
    base_dir: str = "."

    def resolve_output(self, override=None) -> Path:
        out = override or self.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
        out = Path(out)
        return out if out.is_absolute() else Path(self.base_dir) / out

    def dataset_path(self, ds: DatasetConfig) -> Path:
        p = Path(ds.path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate_paths(self) -> None:
        missing = [str(self.dataset_path(d)) for d in self.datasets if d.path is not None and not self.dataset_path(d).exists()]
        if missing:
            raise ConfigError(f"dataset files not found: {missing}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d["schema_version"] = SCHEMA_VERSION
        return d


def parse_config(raw: dict, base_dir: str = ".") -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    raw = copy.deepcopy(raw)
    version = raw.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    known = {"datasets", "seeds", "protocol", "rules", "models", "metrics", "output_dir"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")

    datasets = []
    names = set()
    for j, entry in enumerate(raw.get("datasets") or []):
        where = f"datasets[{j}]"
        if not isinstance(entry, dict) or "name" not in entry:
            raise ConfigError(f"{where}: needs a name")
        extra = set(entry) - {"name", "path", "synth", "schema", "preprocess"}
        if extra:
            raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
        if (entry.get("path") is None) == (entry.get("synth") is None):
            raise ConfigError(f"{where}: give exactly one of path or synth")
        if entry["name"] in names:
            raise ConfigError(f"{where}: duplicate dataset name {entry['name']!r}")
        names.add(entry["name"])
        datasets.append(
            DatasetConfig(
                name=str(entry["name"]),
                path=entry.get("path"),
                synth=_build(SynthConfig, entry["synth"], f"{where}.synth") if entry.get("synth") is not None else None,
                schema=_build(Schema, entry.get("schema"), f"{where}.schema"),
                preprocess=_build(PreprocessConfig, entry.get("preprocess"), f"{where}.preprocess"),
            )
        )
    if not datasets:
        raise ConfigError("at least one dataset is required")

    seeds = raw.get("seeds", [0, 1, 2, 3, 4])
    if not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError(f"seeds must be a non-empty list of integers, got {seeds!r}")

    raw_models = raw.get("models")
    if raw_models is None:
        raw_models = {"attention": {}, "recurrent": {}}
    models = {}
    for arch, params in raw_models.items():
        params = dict(params or {})
        params.setdefault("architecture", arch)
        if params["architecture"] != arch:
            raise ConfigError(f"models.{arch}: architecture mismatch")
        if "seed" in params:
            raise ConfigError(f"models.{arch}: seeds come from the top-level seeds list")
        models[arch] = _build(ModelHParams, params, f"models.{arch}")

    cfg = RunConfig(
        datasets=datasets,
        seeds=list(seeds),
        protocol=_build(ProtocolConfig, raw.get("protocol"), "protocol"),
        rules=_build(RulesConfig, raw.get("rules"), "rules"),
        models=models,
        metrics=_build(MetricsConfig, raw.get("metrics"), "metrics"),
        output_dir=raw.get("output_dir"),
        base_dir=base_dir,
    )
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return parse_config(raw, base_dir=str(path.parent))


def fingerprint(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
