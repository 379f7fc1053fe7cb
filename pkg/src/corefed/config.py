"""Experiment configuration: schema, defaults, parsing and serialization.

Config files are JSON. Missing keys fall back to the defaults below;
unknown keys are hard errors so typos cannot silently change a run. The
resolved config serializes back to JSON and re-parses to an identical
value, which is what run directories store for audit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .nn import ModelSpec

ALGORITHMS = ("corefed", "cofed", "refed", "fedavg")

_TOP_KEYS = {
    "algorithm", "rounds", "clients", "online_per_round", "local_epochs",
    "batch_size", "eta0", "lr_decay", "gamma", "k", "beta", "tau_c",
    "dirichlet_alpha", "seed", "test_fraction", "checkpoint_interval",
    "dataset", "model",
}


@dataclass(frozen=True)
class SyntheticSource:
    """Gaussian-blob dataset parameters."""

    num_classes: int = 4
    input_dim: int = 32
    n: int = 2000


@dataclass(frozen=True)
class IdxSource:
    """Paths to an IDX3 image file and IDX1 label file."""

    images: str
    labels: str


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "corefed"
    rounds: int = 50
    clients: int = 10
    online_per_round: int | float = 1.0
    local_epochs: int = 1
    batch_size: int = 32
    eta0: float = 0.1
    lr_decay: float = 0.999
    gamma: float = 0.5
    k: float = 2.0
    beta: float = 0.5
    tau_c: float = 0.07
    dirichlet_alpha: float = 0.5
    seed: int = 0
    test_fraction: float = 0.2
    checkpoint_interval: int = 0
    dataset: SyntheticSource | IdxSource = field(default_factory=SyntheticSource)
    model: ModelSpec | None = None

    def __post_init__(self):
        if self.model is None:
            object.__setattr__(self, "model", _default_model(self.dataset))
        _validate(self)

    def resolved_online(self) -> int:
        """Number of clients sampled per round."""
        if isinstance(self.online_per_round, int):
            return self.online_per_round
        return min(self.clients, max(1, round(self.online_per_round * self.clients)))


def _default_model(dataset) -> ModelSpec:
    if isinstance(dataset, SyntheticSource):
        return ModelSpec(dataset.input_dim, (64, 64), dataset.num_classes)
    return ModelSpec(784, (200, 200), 10)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


_REAL_FIELDS = ("eta0", "lr_decay", "gamma", "k", "beta", "tau_c",
                "dirichlet_alpha", "test_fraction")


def _validate(cfg: ExperimentConfig) -> None:
    _require(cfg.algorithm in ALGORITHMS,
             f"algorithm must be one of {', '.join(ALGORITHMS)}")
    for name in _REAL_FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number")
    _require(isinstance(cfg.rounds, int) and cfg.rounds >= 0, "rounds must be a non-negative integer")
    _require(isinstance(cfg.clients, int) and cfg.clients >= 1, "clients must be a positive integer")
    if isinstance(cfg.online_per_round, bool) or not isinstance(cfg.online_per_round, (int, float)):
        raise ConfigError("online_per_round must be an integer count or a fraction in (0, 1]")
    if isinstance(cfg.online_per_round, int):
        _require(1 <= cfg.online_per_round <= cfg.clients,
                 "online_per_round must lie in [1, clients]")
    else:
        _require(0.0 < cfg.online_per_round <= 1.0,
                 "online_per_round as a fraction must lie in (0, 1]")
    _require(isinstance(cfg.local_epochs, int) and cfg.local_epochs >= 0,
             "local_epochs must be a non-negative integer")
    _require(isinstance(cfg.batch_size, int) and cfg.batch_size >= 1,
             "batch_size must be a positive integer")
    _require(cfg.eta0 > 0, "eta0 must be positive")
    _require(0.0 < cfg.lr_decay <= 1.0, "lr_decay must lie in (0, 1]")
    _require(cfg.gamma >= 0, "gamma must be non-negative")
    _require(cfg.k >= 0, "k must be non-negative")
    _require(0.0 <= cfg.beta <= 1.0, "beta must lie in [0,1]")
    _require(cfg.tau_c > 0, "tau_c must be positive")
    _require(cfg.dirichlet_alpha > 0, "dirichlet_alpha must be positive")
    _require(isinstance(cfg.seed, int) and cfg.seed >= 0, "seed must be a non-negative integer")
    _require(0.0 < cfg.test_fraction < 1.0, "test_fraction must lie strictly between 0 and 1")
    _require(isinstance(cfg.checkpoint_interval, int) and cfg.checkpoint_interval >= 0,
             "checkpoint_interval must be a non-negative integer")
    if isinstance(cfg.dataset, SyntheticSource):
        src = cfg.dataset
        for name in ("num_classes", "input_dim", "n"):
            value = getattr(src, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"dataset.{name} must be an integer")
        _require(src.num_classes >= 1 and src.input_dim >= 1 and src.n >= 1,
                 "dataset.num_classes, dataset.input_dim and dataset.n must be positive")
        _require(cfg.model.input_dim == src.input_dim,
                 "model.input_dim must match dataset.input_dim")
        _require(cfg.model.num_classes == src.num_classes,
                 "model.num_classes must match dataset.num_classes")


def _parse_dataset(raw) -> SyntheticSource | IdxSource:
    if not isinstance(raw, dict):
        raise ConfigError("dataset must be an object")
    kind = raw.get("kind", "synthetic")
    if kind == "synthetic":
        allowed = {"kind", "num_classes", "input_dim", "n"}
        _reject_unknown(raw, allowed, "dataset")
        defaults = SyntheticSource()
        return SyntheticSource(
            num_classes=raw.get("num_classes", defaults.num_classes),
            input_dim=raw.get("input_dim", defaults.input_dim),
            n=raw.get("n", defaults.n),
        )
    if kind == "idx":
        _reject_unknown(raw, {"kind", "images", "labels"}, "dataset")
        if "images" not in raw or "labels" not in raw:
            raise ConfigError("dataset.images and dataset.labels are required for kind 'idx'")
        return IdxSource(images=str(raw["images"]), labels=str(raw["labels"]))
    raise ConfigError(f"dataset.kind must be 'synthetic' or 'idx', got {kind!r}")


def _parse_model(raw) -> ModelSpec:
    if not isinstance(raw, dict):
        raise ConfigError("model must be an object")
    _reject_unknown(raw, {"input_dim", "hidden_dims", "num_classes", "activation"}, "model")
    for key in ("input_dim", "hidden_dims", "num_classes"):
        if key not in raw:
            raise ConfigError(f"model.{key} is required when model is given")
    return ModelSpec(
        input_dim=raw["input_dim"],
        hidden_dims=tuple(raw["hidden_dims"]),
        num_classes=raw["num_classes"],
        activation=raw.get("activation", "relu"),
    )


def _reject_unknown(raw: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {', '.join(unknown)}")


def parse_config(path) -> ExperimentConfig:
    """Load and validate a JSON config file; missing keys take defaults."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        raw = {}
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    _reject_unknown(raw, _TOP_KEYS, "config")
    kwargs = {key: raw[key] for key in _TOP_KEYS & set(raw)
              if key not in ("dataset", "model")}
    if "dataset" in raw:
        kwargs["dataset"] = _parse_dataset(raw["dataset"])
    if "model" in raw:
        kwargs["model"] = _parse_model(raw["model"])
    return ExperimentConfig(**kwargs)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    if isinstance(cfg.dataset, SyntheticSource):
        dataset = {"kind": "synthetic", "num_classes": cfg.dataset.num_classes,
                   "input_dim": cfg.dataset.input_dim, "n": cfg.dataset.n}
    else:
        dataset = {"kind": "idx", "images": cfg.dataset.images, "labels": cfg.dataset.labels}
    return {
        "algorithm": cfg.algorithm,
        "rounds": cfg.rounds,
        "clients": cfg.clients,
        "online_per_round": cfg.online_per_round,
        "local_epochs": cfg.local_epochs,
        "batch_size": cfg.batch_size,
        "eta0": cfg.eta0,
        "lr_decay": cfg.lr_decay,
        "gamma": cfg.gamma,
        "k": cfg.k,
        "beta": cfg.beta,
        "tau_c": cfg.tau_c,
        "dirichlet_alpha": cfg.dirichlet_alpha,
        "seed": cfg.seed,
        "test_fraction": cfg.test_fraction,
        "checkpoint_interval": cfg.checkpoint_interval,
        "dataset": dataset,
        "model": {
            "input_dim": cfg.model.input_dim,
            "hidden_dims": list(cfg.model.hidden_dims),
            "num_classes": cfg.model.num_classes,
            "activation": cfg.model.activation,
        },
    }


def dumps_config(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    """Content hash of the resolved configuration."""
    return hashlib.sha1(dumps_config(cfg).encode("utf-8")).hexdigest()
