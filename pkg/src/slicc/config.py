"""Experiment config files (TOML or JSON) and their expansion into runs.

Layout::

    [experiment]            # optional
    name = "compare"
    seeds = [0, 1, 2]       # sweep; defaults to [train.seed]
    variants = [{algorithm = "slicc", prototype = "alpha"},
                {algorithm = "centralized", prototype = "centralized_g"}]
    plots = true

    [train]                 # algorithm, episodes and seed are required
    algorithm = "slicc"
    episodes = 3000
    seed = 0

    [env]
    [reward]
"""
from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .env import EnvConfig
from .errors import ConfigError
from .rewards import RewardParams
from .trainer import TrainConfig

REQUIRED_TRAIN_FIELDS = ("algorithm", "episodes", "seed")
SECTIONS = ("experiment", "train", "env", "reward")


@dataclass
class ExperimentSpec:
    name: str
    variants: list[TrainConfig]
    out_dir: str = ""
    plots: bool = True
    raw: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.variants:
            raise ConfigError("experiment has no variants")
        names = [v.name for v in self.variants]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ConfigError(f"duplicate variant names: {dupes}")


def parse_text(text: str, source: str = "<config>") -> dict:
    """Parse TOML, or JSON when the text looks like a JSON object."""
    if text.lstrip().startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def _check_fields(section: str, values: dict, klass, source: str):
    if not isinstance(values, dict):
        raise ConfigError(f"{source}: [{section}] must be a table")
    fields = {f.name: f for f in dataclasses.fields(klass)}
    for key, val in values.items():
        if key not in fields:
            raise ConfigError(f"{source}: unknown field '{section}.{key}'")
        default = fields[key].default
        if default is dataclasses.MISSING or default is None or isinstance(default, str) \
                or key == "prototype":
            continue
        if isinstance(default, bool):
            ok = isinstance(val, bool)
        elif isinstance(default, int):
            ok = isinstance(val, int) and not isinstance(val, bool)
        elif isinstance(default, float):
            ok = isinstance(val, (int, float)) and not isinstance(val, bool)
        elif isinstance(default, tuple):
            ok = isinstance(val, (list, tuple)) and all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in val)
        else:
            ok = True
        if not ok:
            raise ConfigError(
                f"{source}: field '{section}.{key}' has the wrong type "
                f"(expected {type(default).__name__}, got {type(val).__name__})"
            )


def build_spec(data: dict, source: str = "<config>", overrides: dict | None = None) -> ExperimentSpec:
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {sorted(unknown)}")
    train = dict(data.get("train", {}))
    for key in REQUIRED_TRAIN_FIELDS:
        if key not in train:
            raise ConfigError(f"{source}: missing required field 'train.{key}'")
    env = dict(data.get("env", {}))
    reward = dict(data.get("reward", {}))
    exp = dict(data.get("experiment", {}))
    _check_fields("train", train, TrainConfig, source)
    _check_fields("env", env, EnvConfig, source)
    _check_fields("reward", reward, RewardParams, source)
    bad = set(exp) - {"name", "seeds", "variants", "plots", "out"}
    if bad:
        raise ConfigError(f"{source}: unknown field(s) in [experiment]: {sorted(bad)}")

    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    seeds = exp.get("seeds", [train["seed"]])
    if "seed" in overrides:
        seeds = [overrides.pop("seed")]
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError(f"{source}: 'experiment.seeds' must be a non-empty list of integers")
    variants = exp.get("variants", [{}])
    if not isinstance(variants, list) or not variants:
        raise ConfigError(f"{source}: 'experiment.variants' must be a non-empty list of tables")

    configs = []
    for i, var in enumerate(variants):
        _check_fields(f"experiment.variants[{i}]", var, TrainConfig, source)
        for seed in seeds:
            merged = {**train, **var, **overrides, "seed": seed}
            if merged.get("algorithm") == "centralized" and "prototype" not in {**var, **overrides}:
                merged["prototype"] = "centralized_g"
            try:
                cfg = TrainConfig.from_dict({**merged, "env": env, "reward": reward})
            except ConfigError as exc:
                raise ConfigError(f"{source}: {exc}") from None
            if not merged.get("name"):
                cfg.name = f"{cfg.algorithm}-{cfg.prototype.value}-s{seed}"
            elif len(seeds) > 1:
                cfg.name = f"{cfg.name}-s{seed}"
            configs.append(cfg)
    return ExperimentSpec(
        name=str(exp.get("name", Path(source).stem)),
        variants=configs,
        out_dir=str(exp.get("out", "")),
        plots=bool(exp.get("plots", True)),
        raw=data,
    )


def load_spec(path, overrides: dict | None = None) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return build_spec(parse_text(text, str(path)), str(path), overrides)


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    if isinstance(d, list):
        return [_drop_none(v) for v in d]
    return d


def config_to_sections(cfg: TrainConfig) -> dict:
    d = cfg.to_dict()
    env = d.pop("env")
    reward = d.pop("reward")
    return _drop_none({"train": d, "env": env, "reward": reward})


def dumps_toml(data: dict) -> str:
    return tomli_w.dumps(_drop_none(data))


def config_from_sections(data: dict, source: str = "<config>") -> TrainConfig:
    spec = build_spec(data, source)
    if len(spec.variants) != 1:
        raise ConfigError(f"{source}: expected exactly one run, found {len(spec.variants)}")
    return spec.variants[0]
