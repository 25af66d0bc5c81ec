"""Run configuration: a YAML file of nested sections, overridable from the CLI.

One global ``seed`` drives every stage. Each stage gets its own seed from
:func:`derive_seed` (``SeedSequence([seed, crc32(stage_name)])``), so a stage
rerun alone reproduces the same output.
"""
from __future__ import annotations

import os
import zlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from saad.aggregator import DEFAULT_A_VALUES, DEFAULT_B_VALUES, AggregationParams
from saad.errors import ValidationError
from saad.fcn import NetworkConfig
from saad.synth import AnomalySpec, ManeuverConfig, default_anomalies


def derive_seed(seed: int, stage: str) -> int:
    state = np.random.SeedSequence([int(seed), zlib.crc32(stage.encode("utf-8"))]).generate_state(1)
    return int(state[0])


@dataclass(frozen=True)
class SplitConfig:
    maneuvers: ManeuverConfig
    anomalies: tuple[AnomalySpec, ...]


@dataclass(frozen=True)
class StatConfig:
    t: float = 0.05
    k: int = 3
    width: str | float = "auto"
    fit_split: str = "test"
    calibrate_target: float | None = None

    def __post_init__(self):
        if self.fit_split not in ("train", "test"):
            raise ValidationError(f"stat.fit_split must be 'train' or 'test', got {self.fit_split!r}")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: Path = Path("out")
    train_csv: Path | None = None
    test_csv: Path | None = None
    selected_features: tuple[str, ...] | None = None
    target_column: str = "label"
    categorical_columns: tuple[str, ...] = ()
    generate: Mapping[str, SplitConfig] = field(default_factory=dict)
    stat: StatConfig = StatConfig()
    network: NetworkConfig = NetworkConfig()
    aggregation: AggregationParams = AggregationParams()
    beta: float = 1.0
    a_values: tuple[float, ...] = DEFAULT_A_VALUES
    b_values: tuple[float, ...] = DEFAULT_B_VALUES

    @property
    def train_path(self) -> Path:
        return self.train_csv or self.out_dir / "train.csv"

    @property
    def test_path(self) -> Path:
        return self.test_csv or self.out_dir / "test.csv"

    def output(self, name: str) -> Path:
        return self.out_dir / name

    def network_config(self) -> NetworkConfig:
        return replace(self.network, seed=derive_seed(self.seed, "train"))


def _known(cls, section: Mapping[str, Any], where: str) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise ValidationError(f"unknown keys in {where}: {sorted(unknown)}")
    return dict(section)


def _section(raw: Mapping, key: str) -> Mapping:
    value = raw.get(key) or {}
    if not isinstance(value, Mapping):
        raise ValidationError(f"config section {key!r} must be a mapping")
    return value


def _split(raw: Mapping, name: str) -> SplitConfig:
    raw = dict(raw)
    anomalies = raw.pop("anomalies", None)
    raw.pop("seed", None)
    maneuvers = ManeuverConfig(**_known(ManeuverConfig, raw, f"generate.{name}"))
    if anomalies is None:
        specs = default_anomalies()
    else:
        specs = tuple(AnomalySpec(**_known(AnomalySpec, a, f"generate.{name}.anomalies")) for a in anomalies)
    return SplitConfig(maneuvers, specs)


def from_mapping(raw: Mapping, base_dir: Path | None = None) -> RunConfig:
    try:
        return _from_mapping(raw, base_dir)
    except TypeError as exc:
        raise ValidationError(f"bad config value: {exc}") from None


def _from_mapping(raw: Mapping, base_dir: Path | None) -> RunConfig:
    raw = dict(raw or {})
    allowed = {"seed", "out_dir", "data", "columns", "generate", "stat", "network", "aggregation", "sweep"}
    unknown = set(raw) - allowed
    if unknown:
        raise ValidationError(f"unknown top-level config keys: {sorted(unknown)}")
    base = base_dir or Path.cwd()

    def path(p) -> Path | None:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else Path(os.path.normpath(base / p))

    data = _section(raw, "data")
    columns = _section(raw, "columns")
    stat = _section(raw, "stat")
    agg = dict(_section(raw, "aggregation"))
    sweep = _section(raw, "sweep")
    generate = {name: _split(sec, name) for name, sec in _section(raw, "generate").items()}
    beta = float(agg.pop("beta", 1.0))
    if not beta > 0:
        raise ValidationError("aggregation.beta must be positive")

    network = dict(_section(raw, "network"))
    network.pop("seed", None)
    selected = columns.get("selected_features")
    return RunConfig(
        seed=int(raw.get("seed", 0)),
        out_dir=path(raw.get("out_dir", "out")),
        train_csv=path(data.get("train")),
        test_csv=path(data.get("test")),
        selected_features=tuple(selected) if selected else None,
        target_column=columns.get("target_column", "label"),
        categorical_columns=tuple(columns.get("categorical_columns", ())),
        generate=generate,
        stat=StatConfig(**_known(StatConfig, stat, "stat")),
        network=NetworkConfig(**_known(NetworkConfig, network, "network")),
        aggregation=AggregationParams(**_known(AggregationParams, agg, "aggregation")),
        beta=beta,
        a_values=tuple(float(a) for a in sweep.get("a_values", DEFAULT_A_VALUES)),
        b_values=tuple(float(b) for b in sweep.get("b_values", DEFAULT_B_VALUES)),
    )


def load(path) -> RunConfig:
    """Read a YAML config; relative paths inside resolve against the file's directory."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such config file: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ValidationError(f"cannot parse {path}: {exc}") from None
    if raw is not None and not isinstance(raw, Mapping):
        raise ValidationError(f"{path} must hold a mapping at top level")
    return from_mapping(raw or {}, path.parent)


def override(cfg: RunConfig, *, seed=None, out_dir=None, a=None, b=None, beta=None,
             calibrate_t=None) -> RunConfig:
    """Apply command-line flags on top of a loaded config."""
    changes: dict[str, Any] = {}
    if seed is not None:
        changes["seed"] = int(seed)
    if out_dir is not None:
        changes["out_dir"] = Path(out_dir)
    if a is not None or b is not None:
        changes["aggregation"] = AggregationParams(
            cfg.aggregation.a if a is None else float(a),
            cfg.aggregation.b if b is None else float(b),
        )
    if a is not None:
        changes["a_values"] = (float(a),)
    if b is not None:
        changes["b_values"] = (float(b),)
    if beta is not None:
        if not beta > 0:
            raise ValidationError("--beta must be positive")
        changes["beta"] = float(beta)
    if calibrate_t is not None:
        changes["stat"] = replace(cfg.stat, calibrate_target=float(calibrate_t))
    return replace(cfg, **changes)
