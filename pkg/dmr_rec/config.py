from __future__ import annotations

import hashlib
import os
import zlib
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from dotenv import dotenv_values, load_dotenv

from .errors import ConfigError

load_dotenv()

ENV_PREFIX = "DMR_"
SIMILARITIES = ("pcc", "pcc-global", "overlap")


@dataclass(frozen=True)
class RunConfig:
    # paths
    log_path: str = "data/interactions.csv"
    out_dir: str = "data/run"
    db_path: str = "data/dmr_runs.sqlite"
    # interaction-core
    split_fraction: float = 0.8
    # implicit user network
    k: int = 1
    g: int = 200
    tau: float = 0.5
    n_max: int = 20
    similarity: str = "pcc"
    future_cap: int = 100
    n_jobs: int = 1
    # model
    dim: int = 32
    trends: int = 6
    time_power: float = 1.0
    time_scale: float = 0.0
    neg_weight: float = 0.5
    # training
    learning_rate: float = 0.001
    batch_size: int = 32
    l2_reg: float = 1e-4
    epochs: int = 20
    seed: int = 42
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    neg_ratio: int = 4
    # evaluation
    eval_n: int = 50
    candidate_pool: int = 100
    diversity_ns: str = "10,50,100"
    sweep_neighbors: str = "5,20,50"
    # synthetic world
    n_users: int = 500
    n_items: int = 2000
    n_categories: int = 8
    trends_per_user: int = 2
    interactions_per_user: int = 40
    drift_prob: float = 0.1
    click_noise: float = 0.1
    click_rate: float = 0.5
    trend_skew: float = 1.0

    def to_text(self) -> str:
        lines = [f"{key}={_format_value(value)}" for key, value in sorted(asdict(self).items())]
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        updated = replace(self, **{k: _coerce(k, v) for k, v in overrides.items()})
        validate_config(updated)
        return updated

    @property
    def diversity_cutoffs(self) -> tuple[int, ...]:
        return _int_list("diversity_ns", self.diversity_ns)

    @property
    def sweep_settings(self) -> tuple[int, ...]:
        return _int_list("sweep_neighbors", self.sweep_neighbors)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _int_list(name: str, raw: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"{name} must be a comma-separated list of integers, got {raw!r}") from exc
    if not values:
        raise ConfigError(f"{name} must not be empty")
    return values


def _coerce(name: str, value: Any) -> Any:
    if name not in _FIELD_TYPES:
        raise ConfigError(f"Unknown config key: {name}")
    kind = _FIELD_TYPES[name]
    try:
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind == "float":
            return float(value)
        return str(value).strip()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected {kind}, got {value!r}") from exc


def validate_config(config: RunConfig) -> None:
    checks = [
        (0.0 < config.split_fraction < 1.0, "split_fraction must be in (0, 1)"),
        (config.k >= 1, "k must be >= 1"),
        (0.0 <= config.tau < 1.0, "tau must be in [0, 1)"),
        (config.g >= config.n_max >= 0, "require g >= n_max >= 0"),
        (config.similarity in SIMILARITIES, f"similarity must be one of {', '.join(SIMILARITIES)}"),
        (config.future_cap >= 0, "future_cap must be >= 0"),
        (config.n_jobs != 0, "n_jobs must be nonzero"),
        (config.dim >= 1 and config.trends >= 1, "dim and trends must be >= 1"),
        (config.time_power > 0, "time_power must be > 0"),
        (config.time_scale >= 0, "time_scale must be >= 0 (0 = training time span)"),
        (config.neg_weight >= 0, "neg_weight must be >= 0"),
        (config.learning_rate > 0, "learning_rate must be > 0"),
        (config.batch_size >= 1, "batch_size must be >= 1"),
        (config.l2_reg >= 0, "l2_reg must be >= 0"),
        (config.epochs >= 0, "epochs must be >= 0"),
        (0.0 <= config.adam_beta1 < 1.0 and 0.0 <= config.adam_beta2 < 1.0, "adam betas must be in [0, 1)"),
        (config.adam_eps > 0, "adam_eps must be > 0"),
        (config.neg_ratio >= 0, "neg_ratio must be >= 0"),
        (config.eval_n >= 1, "eval_n must be >= 1"),
        (config.candidate_pool >= 0, "candidate_pool must be >= 0"),
        (min(config.n_users, config.n_items, config.n_categories, config.trends_per_user) >= 1,
         "synthetic counts must be >= 1"),
        (config.interactions_per_user >= 1, "interactions_per_user must be >= 1"),
        (all(0.0 <= p <= 1.0 for p in (config.drift_prob, config.click_noise, config.click_rate)),
         "synthetic probabilities must be in [0, 1]"),
        (config.trend_skew >= 0, "trend_skew must be >= 0"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)
    if min(config.diversity_cutoffs) < 2:
        raise ConfigError("diversity_ns cutoffs must be >= 2")
    if min(config.sweep_settings) < 0:
        raise ConfigError("sweep_neighbors must be >= 0")


def _from_env() -> dict[str, str]:
    values: dict[str, str] = {}
    for name in _FIELD_TYPES:
        raw = os.getenv(ENV_PREFIX + name.upper())
        if raw is not None and raw.strip():
            values[name] = raw.strip()
    return values


def read_config_file(path: str) -> dict[str, str]:
    config_path = Path(path)
    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    raw = dotenv_values(config_path)
    unknown = sorted(key for key in raw if key not in _FIELD_TYPES)
    if unknown:
        raise ConfigError(f"Unknown config keys in {path}: {', '.join(unknown)}")
    return {key: value for key, value in raw.items() if value is not None}


def load_config(path: str | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    merged: dict[str, Any] = _from_env()
    if path:
        merged.update(read_config_file(path))
    if overrides:
        merged.update({key: value for key, value in overrides.items() if value is not None})
    config = RunConfig(**{key: _coerce(key, value) for key, value in merged.items()})
    validate_config(config)
    return config


def write_config(config: RunConfig, out_dir: str, filename: str = "config.txt") -> str:
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    path = Path(out_dir) / filename
    path.write_text(config.to_text(), encoding="utf-8")
    return str(path)


def rng_for(seed: int, stream: str) -> np.random.Generator:
    """Independent generator for a named sub-stream of the top-level seed."""
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(stream.encode("utf-8"))])
