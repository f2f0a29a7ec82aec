"""Pipeline configuration: file paths plus analysis and transport parameters.

A config file is YAML (or JSON) with two optional mappings::

    paths:
      apps_dir: null          # directory of .groovy apps; null = bundled corpus
      scenario: office-baseline
      data_dir: ./logdata
      model: model.json
      policy: null            # null = the scenario's own policy block
    params:
      slot_ms: 10000          # state slot width
      epsilon: 0.001          # Laplace smoothing constant
      tau: null               # anomaly threshold; null = half the smallest training probability
      batch_size: 10          # records per transport batch
      flush_ms: 500           # transport flush interval
      window: 30              # tamper window, in slots
      ratio: 0.5              # tamper contradiction ratio
      seed: 42
      train_fraction: 0.75

Unknown keys are rejected; command-line flags override file values.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .analyzer.features import SLOT_MS
from .analyzer.markov import EPSILON
from .analyzer.tamper import RATIO, WINDOW_SLOTS
from .experiments import AnalysisConfig
from .logstore.transport import BATCH_SIZE, FLUSH_INTERVAL_MS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Paths:
    apps_dir: str | None = None
    scenario: str = "office-baseline"
    data_dir: str | None = None
    model: str | None = None
    policy: str | None = None


@dataclass(frozen=True)
class Params:
    slot_ms: int = SLOT_MS
    epsilon: float = EPSILON
    tau: float | None = None
    batch_size: int = BATCH_SIZE
    flush_ms: int = FLUSH_INTERVAL_MS
    window: int = WINDOW_SLOTS
    ratio: float = RATIO
    seed: int = 42
    train_fraction: float = 0.75

    def validate(self) -> None:
        checks = (
            ("slot_ms", isinstance(self.slot_ms, int) and self.slot_ms >= 1, "a positive integer"),
            ("epsilon", _number(self.epsilon) and self.epsilon > 0, "a positive number"),
            ("tau", self.tau is None or (_number(self.tau) and 0 < self.tau < 1), "null or in (0, 1)"),
            ("batch_size", isinstance(self.batch_size, int) and self.batch_size >= 1, "a positive integer"),
            ("flush_ms", isinstance(self.flush_ms, int) and self.flush_ms >= 1, "a positive integer"),
            ("window", isinstance(self.window, int) and self.window >= 1, "a positive integer"),
            ("ratio", _number(self.ratio) and 0 <= self.ratio < 1, "in [0, 1)"),
            ("seed", isinstance(self.seed, int) and not isinstance(self.seed, bool), "an integer"),
            ("train_fraction", _number(self.train_fraction) and 0 < self.train_fraction < 1, "in (0, 1)"),
        )
        for name, ok, want in checks:
            if not ok:
                raise ConfigError(f"params.{name} must be {want}, got {getattr(self, name)!r}")


def _number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


@dataclass(frozen=True)
class PipelineConfig:
    paths: Paths = field(default_factory=Paths)
    params: Params = field(default_factory=Params)

    def __post_init__(self) -> None:
        self.params.validate()

    def analysis(self) -> AnalysisConfig:
        p = self.params
        return AnalysisConfig(p.slot_ms, p.epsilon, p.tau, p.window, p.ratio, p.train_fraction)

    def override(self, **values) -> PipelineConfig:
        """Replace the given keys (``None`` means keep the current value)."""
        path_keys = {f.name for f in fields(Paths)}
        param_keys = {f.name for f in fields(Params)}
        unknown = set(values) - path_keys - param_keys
        if unknown:
            raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
        paths = {k: v for k, v in values.items() if k in path_keys and v is not None}
        params = {k: v for k, v in values.items() if k in param_keys and v is not None}
        return PipelineConfig(replace(self.paths, **paths), replace(self.params, **params))

    def to_dict(self) -> dict:
        return {"paths": asdict(self.paths), "params": asdict(self.params)}


def config_from_dict(doc: dict | None) -> PipelineConfig:
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    extra = set(doc) - {"paths", "params"}
    if extra:
        raise ConfigError(f"unknown config section {sorted(extra)[0]!r}")
    sections = {}
    for name, cls in (("paths", Paths), ("params", Params)):
        section = doc.get(name)
        if section is None:
            section = {}
        if not isinstance(section, dict):
            raise ConfigError(f"{name} must be a mapping")
        known = {f.name for f in fields(cls)}
        bad = set(section) - known
        if bad:
            raise ConfigError(f"unknown key {name}.{sorted(bad)[0]}")
        sections[name] = cls(**section)
    return PipelineConfig(sections["paths"], sections["params"])


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        doc = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file is not valid YAML: {exc}") from None
    return config_from_dict(doc)
