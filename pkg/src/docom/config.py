"""Experiment configuration: flat ``key = value`` files, presets and overrides.

Resolution order (later wins): field defaults, preset, config file, flags.
The file format is one ``key = value`` pair per line; ``#`` starts a
comment; blank lines are ignored.  Lists are comma-separated.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .algorithms import ALGORITHMS
from .problems import SKEWED_PARTITION

__all__ = [
    "ConfigError",
    "UnknownKeyError",
    "RangeError",
    "MissingFieldError",
    "ExperimentConfig",
    "PRESETS",
    "parse_config",
    "read_config_file",
    "config_to_text",
    "write_config",
]


class ConfigError(ValueError):
    exit_code = 2


class UnknownKeyError(ConfigError):
    exit_code = 3


class RangeError(ConfigError):
    exit_code = 4


class MissingFieldError(ConfigError):
    exit_code = 5


REQUIRED = ("algo", "iters")


def _opt(kind):
    return field(default=None, metadata={"kind": kind, "optional": True})


def _f(default, kind):
    return field(default=default, metadata={"kind": kind})


@dataclass(frozen=True)
class ExperimentConfig:
    algo: str | None = _opt("str")
    iters: int | None = _opt("int")
    # topology / compression
    topology: str = _f("ring", "str")
    n: int = _f(25, "int")
    compressor: str = _f("top_k:0.05", "str")
    # problem
    problem: str = _f("sigmoid", "str")
    d_feat: int = _f(1000, "int")
    classes: int = _f(5, "int")
    lam: float = _f(1e-4, "float")
    labels: str = _f("plus_minus", "str")
    partition: str = _f("skewed25", "str")
    dominant_classes: int = _f(2, "int")
    skew: float = _f(0.9, "float")
    mean_scale: float = _f(0.05, "float")
    noise_scale: float = _f(1.0, "float")
    data_seed: int | None = _opt("int")
    quad_dim: int = _f(20, "int")
    quad_rows: int | None = _opt("int")
    quad_rank: int | None = _opt("int")
    sigma: float = _f(0.0, "float")
    # hyperparameters
    eta: float = _f(0.01, "float")
    gamma: float = _f(1.0, "float")
    beta: float = _f(1.0, "float")
    b0: int | None = _opt("int")
    batch: int = _f(1, "int")
    lr_schedule: str = _f("", "str")
    step_rule: str = _f("manual", "str")
    eta_mult: float = _f(1.0, "float")
    gamma_mult: float = _f(1.0, "float")
    beta_mult: float = _f(1.0, "float")
    b0_mult: float = _f(1.0, "float")
    lipschitz: float | None = _opt("float")
    # run control
    seed: int = _f(0, "int")
    stride: int = _f(1, "int")
    workers: int = _f(1, "int")
    record_wallclock: bool = _f(False, "bool")
    out: str = _f("runs/default", "str")

    def __post_init__(self):
        validate(self)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    @property
    def data_seed_value(self) -> int:
        return self.seed if self.data_seed is None else self.data_seed

    def partition_sizes(self) -> list[int] | None:
        """Per-agent sample counts for the sigmoid problem."""
        p = self.partition.strip()
        if p == "skewed25":
            return list(SKEWED_PARTITION)
        if p.startswith("uniform:"):
            from .problems import uniform_partition

            return uniform_partition(int(p[8:]), self.n)
        return [int(s) for s in p.split(",") if s.strip()]

    def schedule(self) -> list[tuple[int, float]]:
        """Piecewise-constant ``eta`` multipliers as ``[(start_iter, factor), ...]``."""
        out = []
        for item in self.lr_schedule.split(","):
            if item.strip():
                start, factor = item.split(":")
                out.append((int(start), float(factor)))
        return sorted(out)

    def eta_at(self, t: int, eta: float) -> float:
        factor = 1.0
        for start, f in self.schedule():
            if t >= start:
                factor = f
        return eta * factor


FIELDS = {f.name: f for f in fields(ExperimentConfig)}

CHOICES = {
    "algo": tuple(ALGORITHMS),
    "problem": ("sigmoid", "quadratic"),
    "labels": ("plus_minus", "zero_one"),
    "step_rule": ("manual", "safe", "rate_optimal"),
}


def _range_fail(key, value, why):
    raise RangeError(f"{key}={value!r}: {why}")


def validate(cfg: ExperimentConfig) -> None:
    for key, choices in CHOICES.items():
        value = getattr(cfg, key)
        if value is not None and value not in choices:
            _range_fail(key, value, f"expected one of {choices}")
    positive_ints = ("n", "d_feat", "classes", "quad_dim", "batch", "stride", "workers", "dominant_classes")
    for key in positive_ints:
        if getattr(cfg, key) < 1:
            _range_fail(key, getattr(cfg, key), "must be >= 1")
    for key in ("quad_rows", "quad_rank", "b0"):
        v = getattr(cfg, key)
        if v is not None and v < 1:
            _range_fail(key, v, "must be >= 1")
    if cfg.iters is not None and cfg.iters < 0:
        _range_fail("iters", cfg.iters, "must be >= 0")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        _range_fail("seed", cfg.seed, "must be a 64-bit unsigned integer")
    if not (cfg.eta >= 0 and math.isfinite(cfg.eta)):
        _range_fail("eta", cfg.eta, "must be finite and >= 0")
    if not 0 < cfg.gamma <= 1:
        _range_fail("gamma", cfg.gamma, "must be in (0, 1]")
    if not 0 < cfg.beta <= 1:
        _range_fail("beta", cfg.beta, "must be in (0, 1]")
    if cfg.lam < 0:
        _range_fail("lam", cfg.lam, "must be >= 0")
    if cfg.sigma < 0:
        _range_fail("sigma", cfg.sigma, "must be >= 0")
    if not 0 <= cfg.skew <= 1:
        _range_fail("skew", cfg.skew, "must be in [0, 1]")
    for key in ("eta_mult", "gamma_mult", "beta_mult", "b0_mult", "mean_scale", "noise_scale"):
        if not getattr(cfg, key) > 0:
            _range_fail(key, getattr(cfg, key), "must be > 0")
    if cfg.lipschitz is not None and not cfg.lipschitz > 0:
        _range_fail("lipschitz", cfg.lipschitz, "must be > 0")
    if cfg.dominant_classes > cfg.classes:
        _range_fail("dominant_classes", cfg.dominant_classes, "cannot exceed classes")
    try:
        cfg.schedule()
    except ValueError:
        _range_fail("lr_schedule", cfg.lr_schedule, "expected 'start:factor,...'")
    if cfg.problem == "sigmoid":
        try:
            sizes = cfg.partition_sizes()
        except ValueError as exc:
            _range_fail("partition", cfg.partition, str(exc))
        if len(sizes) != cfg.n:
            _range_fail("partition", cfg.partition, f"has {len(sizes)} shards but n={cfg.n}")
        if any(s < 1 for s in sizes):
            _range_fail("partition", cfg.partition, "every shard needs >= 1 sample")
    if not (cfg.topology in ("ring", "complete") or cfg.topology.startswith("file:")):
        _range_fail("topology", cfg.topology, "expected ring, complete or file:<path>")


def _convert(key: str, raw):
    if key not in FIELDS:
        raise UnknownKeyError(f"unknown config key {key!r}")
    meta = FIELDS[key].metadata
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if meta.get("optional") and text.lower() in ("", "none", "full"):
        return None
    kind = meta["kind"]
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
    except ValueError:
        raise RangeError(f"{key}={raw!r}: expected {kind}") from None
    return text


def read_config_file(path) -> dict[str, str]:
    """Parse a flat key-value file into raw strings (no validation yet)."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return values


PRESETS: dict[str, dict] = {
    # tuned values for the 25-agent ring, linear model, synthetic data
    "syn-linear-docom": dict(algo="docom", eta=0.01, gamma=0.15, beta=0.01, compressor="top_k:0.05", batch=2),
    "syn-linear-choco": dict(algo="choco", eta=0.01, gamma=0.32, compressor="top_k:0.1", batch=4),
    "syn-linear-gnsd": dict(algo="gnsd", eta=0.01, compressor="identity", batch=4),
    "syn-linear-gt_hsgd": dict(algo="gt_hsgd", eta=0.01, beta=0.01, compressor="identity", batch=2),
    "syn-linear-dsgd": dict(algo="dsgd", eta=0.01, compressor="identity", batch=4),
    "quad-pl-docom": dict(
        algo="docom", problem="quadratic", n=8, quad_dim=20, sigma=0.0, compressor="top_k:0.2",
        step_rule="safe", beta=0.5, iters=2000, stride=20,
    ),
}
_SYN_COMMON = dict(problem="sigmoid", topology="ring", n=25, partition="skewed25", lam=1e-4, iters=3000, stride=50)
for _name, _p in PRESETS.items():
    if _name.startswith("syn-"):
        PRESETS[_name] = {**_SYN_COMMON, **_p}


def parse_config(path=None, overrides: dict | None = None, preset: str | None = None) -> ExperimentConfig:
    """Resolve defaults < preset < file < overrides into a validated config.

    ``overrides`` maps keys to strings or already-typed values; a ``preset``
    key inside the file is honoured unless ``preset`` is given explicitly.
    """
    file_values = read_config_file(path) if path is not None else {}
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    preset = preset or overrides.pop("preset", None) or file_values.pop("preset", None)
    file_values.pop("preset", None)
    merged: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise UnknownKeyError(f"unknown preset {preset!r}; see `docom preset list`")
        merged.update(PRESETS[preset])
    merged.update({k: _convert(k, v) for k, v in file_values.items()})
    merged.update({k: _convert(k, v) for k, v in overrides.items()})
    for key in REQUIRED:
        if merged.get(key) is None:
            raise MissingFieldError(f"required field {key!r} is missing")
    return ExperimentConfig(**merged)


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_text(cfg: ExperimentConfig) -> str:
    lines = ["# resolved experiment configuration"]
    lines += [f"{f.name} = {_format(getattr(cfg, f.name))}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"


def write_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config_to_text(cfg))
    return path
