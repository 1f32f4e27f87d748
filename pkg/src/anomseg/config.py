"""Run configuration: one nested JSON document drives every command.

Every field has a default; unknown sections or keys are rejected so typos
cannot silently fall back to defaults. Dotted `--set section.key=value`
overrides are applied before validation.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

from . import phantom as phantom_mod
from .phantom import PhantomConfig
from .postproc import PostprocParams
from .segnet import NetworkConfig, TrainConfig


class ConfigError(ValueError):
    """Malformed configuration (unknown key, bad type, invalid value)."""


@dataclass(frozen=True)
class DatasetCounts:
    train_healthy: int = 40
    val_healthy: int = 6
    val_diseased: int = 5
    test_diseased: int = 20
    test_healthy: int = 15

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class InferenceConfig:
    n_samples: int = 50
    seed: int = 777

    def validate(self) -> None:
        if self.n_samples < 2:
            raise ConfigError("inference.n_samples must be >= 2")


def _default_d_grid() -> tuple[float, ...]:
    return tuple(round(0.05 * i, 2) for i in range(21))


def _default_t_grid() -> tuple[float, ...]:
    return tuple(round(0.01 * i, 2) for i in range(1, 21))


@dataclass(frozen=True)
class EvalConfig:
    d_grid: tuple[float, ...] = field(default_factory=_default_d_grid)
    t_grid: tuple[float, ...] = field(default_factory=_default_t_grid)
    p_grid: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    histogram_bins: int = 16

    def validate(self) -> None:
        for name in ("d_grid", "t_grid", "p_grid"):
            if not getattr(self, name):
                raise ConfigError(f"eval.{name} must be nonempty")
        if any(not (0 <= d <= 1) for d in self.d_grid):
            raise ConfigError("eval.d_grid values must lie in [0, 1]")


@dataclass(frozen=True)
class Paths:
    data_root: str = "data"
    model_path: str = "runs/model.bunw"
    output_dir: str = "runs"


@dataclass(frozen=True)
class RunConfig:
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    dataset: DatasetCounts = field(default_factory=DatasetCounts)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    postproc: PostprocParams = field(default_factory=PostprocParams)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: Paths = field(default_factory=Paths)

    def validate(self) -> None:
        try:
            self.phantom.validate()
            self.network.validate()
            self.training.validate()
            self.inference.validate()
            self.postproc.validate()
            self.eval.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.network.num_classes != self.phantom.num_layer_classes:
            raise ConfigError(
                "network.num_classes must equal phantom.num_layer_classes"
            )
        if tuple(self.network.input_shape) != (self.phantom.height, self.phantom.width):
            raise ConfigError("network.input_shape must match the phantom geometry")


DEFAULT = RunConfig()


def to_dict(config: RunConfig) -> dict:
    out = {
        "phantom": phantom_mod.config_to_dict(config.phantom),
        "dataset": asdict(config.dataset),
        "network": asdict(config.network),
        "training": asdict(config.training),
        "inference": asdict(config.inference),
        "postproc": asdict(config.postproc),
        "eval": asdict(config.eval),
        "paths": asdict(config.paths),
    }
    return json.loads(json.dumps(out))  # tuples -> lists, plain JSON types


_SECTION_BUILDERS = {
    "phantom": phantom_mod.config_from_dict,
    "dataset": DatasetCounts,
    "network": NetworkConfig,
    "training": TrainConfig,
    "inference": InferenceConfig,
    "postproc": PostprocParams,
    "eval": EvalConfig,
    "paths": Paths,
}

_TUPLE_KEYS = {
    "channels", "input_shape", "max_translation_frac", "vote_thresholds",
    "d_grid", "t_grid", "p_grid",
}


def from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from a (possibly partial) nested dict."""
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a JSON object")
    unknown = set(data) - set(_SECTION_BUILDERS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    kwargs = {}
    for section, builder in _SECTION_BUILDERS.items():
        base = to_dict(DEFAULT)[section]
        override = data.get(section, {})
        if not isinstance(override, dict):
            raise ConfigError(f"section {section!r} must be a JSON object")
        bad = set(override) - set(base)
        if bad:
            raise ConfigError(f"unknown key(s) in section {section!r}: {sorted(bad)}")
        merged = {**base, **override}
        if section == "phantom":
            try:
                kwargs[section] = builder(merged)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        else:
            for key in list(merged):
                if key in _TUPLE_KEYS and isinstance(merged[key], list):
                    merged[key] = tuple(merged[key])
            try:
                kwargs[section] = builder(**merged)
            except TypeError as exc:
                raise ConfigError(str(exc)) from exc
    config = RunConfig(**kwargs)
    config.validate()
    return config


def load(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(data)


def apply_overrides(config: RunConfig, pairs: list[str]) -> RunConfig:
    """Apply repeatable --set section.key=value overrides."""
    data = to_dict(config)
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) < 2:
            raise ConfigError(f"--set key must be dotted (section.key), got {key!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config path {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = value
    return from_dict(data)


def config_hash(config: RunConfig) -> str:
    canonical = json.dumps(to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
