"""Experiment configuration: defaults, validation and flat ``key=value`` files."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .codec import cardinality

SETTINGS = ("cold", "warm-nonprivate", "warm-private")
ENVIRONMENTS = ("synthetic", "multilabel", "addata")
PRIVATE_CONTEXTS = ("onehot", "centroid")


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists one message per offending field."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass
class ExperimentConfig:
    env: str = "synthetic"
    d: int = 10
    q: int = 1
    k: int = 1024
    actions: int = 10
    users: int = 1000
    samples: int = 10
    alpha: float = 1.0
    cb_sampling_rate: float = 0.5
    neg_rew_sam_rate: float = 0.05
    cb_context_threshold: int = 10
    beta: float = 0.1
    sigma2: float = 0.01
    weight_scale: float = 1.0
    batch: int = 1000
    omega_c: float = 1.0
    seed: int = 0
    runs: int = 1
    eval_agents: int = 500
    checkpoints: tuple[int, ...] = ()
    settings: tuple[str, ...] = SETTINGS
    private_context: str = "onehot"
    encoder_samples: int = 100_000
    data: str = ""
    encoder: str = ""
    out: str = ""
    batch_log: str = ""
    numeric_columns: int = 13
    categorical_columns: int = 26
    hash_buckets: int = 2**24

    def problems(self) -> list[str]:
        errs = []
        if self.env not in ENVIRONMENTS:
            errs.append(f"env: must be one of {', '.join(ENVIRONMENTS)}, got {self.env!r}")
        for name in ("d", "q", "k", "actions", "users", "samples", "batch", "runs",
                     "eval_agents", "cb_context_threshold", "encoder_samples",
                     "numeric_columns", "categorical_columns", "hash_buckets"):
            if getattr(self, name) < 1:
                errs.append(f"{name}: must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.cb_sampling_rate < 1.0:
            errs.append(f"cb_sampling_rate: must lie in [0, 1), got {self.cb_sampling_rate}")
        if not 0.0 <= self.neg_rew_sam_rate < 1.0:
            errs.append(f"neg_rew_sam_rate: must lie in [0, 1), got {self.neg_rew_sam_rate}")
        if self.alpha < 0:
            errs.append(f"alpha: must be >= 0, got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            errs.append(f"beta: must lie in [0, 1], got {self.beta}")
        if self.weight_scale <= 0:
            errs.append(f"weight_scale: must be > 0, got {self.weight_scale}")
        if self.sigma2 < 0:
            errs.append(f"sigma2: must be >= 0, got {self.sigma2}")
        if self.omega_c <= 0:
            errs.append(f"omega_c: must be > 0, got {self.omega_c}")
        if self.d >= 1 and self.q >= 1 and self.k >= 1:
            n = cardinality(self.d, self.q)
            if self.k > n:
                errs.append(f"k: {self.k} exceeds the number of grid points "
                            f"n = C(10^q+d-1, d-1) = {n} for d={self.d}, q={self.q}")
        bad = [s for s in self.settings if s not in SETTINGS]
        if bad or not self.settings:
            errs.append(f"settings: each must be one of {', '.join(SETTINGS)}, got {list(self.settings)}")
        if self.private_context not in PRIVATE_CONTEXTS:
            errs.append(f"private_context: must be one of {', '.join(PRIVATE_CONTEXTS)}")
        if any(c < 1 for c in self.checkpoints) or list(self.checkpoints) != sorted(set(self.checkpoints)):
            errs.append(f"checkpoints: must be strictly increasing positive integers, got {list(self.checkpoints)}")
        if self.env in ("multilabel", "addata") and not self.data:
            errs.append(f"data: required for env={self.env}")
        if self.env == "addata" and self.d > self.numeric_columns:
            errs.append(f"d: at most numeric_columns={self.numeric_columns} for addata, got {self.d}")
        return errs

    def validate(self) -> "ExperimentConfig":
        errs = self.problems()
        if errs:
            raise ConfigError(errs)
        return self

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _field_types() -> dict[str, type]:
    defaults = ExperimentConfig()
    return {f.name: type(getattr(defaults, f.name)) for f in fields(ExperimentConfig)}


def coerce(key: str, raw: str):
    """Convert a string value to the type of field ``key``."""
    types = _field_types()
    if key not in types:
        raise ConfigError([f"{key}: unknown configuration key"])
    kind = types[key]
    try:
        if kind is tuple:
            items = [v.strip() for v in raw.split(",") if v.strip()]
            return tuple(int(v) for v in items) if key == "checkpoints" else tuple(items)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError([f"{key}: cannot parse {raw!r} as {kind.__name__}"]) from None


def parse_text(text: str) -> dict:
    values = {}
    problems = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected key=value, got {line!r}")
            continue
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            values[key] = coerce(key, raw)
        except ConfigError as exc:
            problems.extend(f"line {lineno}: {p}" for p in exc.problems)
    if problems:
        raise ConfigError(problems)
    return values


def load_config(path, **overrides) -> ExperimentConfig:
    values = parse_text(Path(path).read_text())
    values.update(overrides)
    return ExperimentConfig(**values)


def from_text(text: str) -> ExperimentConfig:
    return ExperimentConfig(**parse_text(text))


def default_checkpoints(n_train: int) -> tuple[int, ...]:
    """Powers of ten from 100 below ``n_train``, then ``n_train`` itself."""
    points = []
    c = 100
    while c < n_train:
        points.append(c)
        c *= 10
    points.append(n_train)
    return tuple(points)

