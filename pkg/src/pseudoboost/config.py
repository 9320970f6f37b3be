"""Experiment configuration: JSON text with a fixed, fail-closed schema.

Every key is optional and defaults to the desk-scale Gaussian experiment.
Unknown keys are rejected with their full path so typos never pass
silently. Units: angles in degrees, everything else dimensionless.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, is_dataclass
import json
import math
import os
from pathlib import Path
from typing import get_type_hints

from pseudoboost.distributions import NoiseFamily
from pseudoboost.exceptions import ConfigError
from pseudoboost.losses import LossKind

SEED_ENV = "PSEUDOBOOST_SEED"


@dataclass(frozen=True)
class InitConfig:
    """How the self-training start vector is built when no supervised stage runs.

    ``mode = "angle"`` places ``beta_0`` at ``theta0_deg`` degrees from ``mu``
    in a random plane; ``mode = "file"`` reads a vector from ``path`` (``.npy``
    or whitespace/comma separated text).
    """

    mode: str = "angle"
    theta0_deg: float = 20.0
    path: str | None = None


@dataclass(frozen=True)
class SelfTrainSection:
    """``schedule`` is ``"practical"`` (eta = 0.1/d, B = ceil(4/eps), T = ceil(2d/eps))
    or ``"theorem"``. ``eta``, ``batch_size`` and ``iterations`` override the
    schedule when set; ``sigma = null`` means ``max(R, ||mu||)``."""

    schedule: str = "practical"
    eps: float = 0.02
    delta: float = 0.01
    sigma: float | None = None
    eta: float | None = None
    batch_size: int | None = None
    iterations: int | None = None
    c_b: float = 1.0
    init: InitConfig = field(default_factory=InitConfig)


@dataclass(frozen=True)
class SupervisedSection:
    """``schedule`` is ``"practical"`` (the explicit eta, iterations, runs) or
    ``"theorem2"``; the latter derives all three from ``c_err`` (``null`` means
    the certified threshold) and ``delta``. A trial of the ``supervised``
    command passes when the selected iterate's error is at most
    ``target_err``."""

    schedule: str = "practical"
    eta: float = 0.01
    iterations: int = 2000
    runs: int = 4
    delta: float | None = None
    validation_size: int = 200
    c_err: float | None = None
    target_err: float = 0.05


@dataclass(frozen=True)
class PipelineSection:
    """``handoff_threshold`` caps the pseudolabeler's validation error."""

    handoff_threshold: float = 0.25


@dataclass(frozen=True)
class ExperimentConfig:
    dimension: int = 20
    noise: str = "gaussian"
    mu_norm: float = 2.0
    mu_direction: str = "e1"
    R: float = 1.0
    loss: str = "logistic"
    seed: int = 0
    trials: int = 20
    min_pass_fraction: float = 0.9
    err_mc_samples: int = 100_000
    max_iterations: int = 10_000_000
    selftrain: SelfTrainSection = field(default_factory=SelfTrainSection)
    supervised: SupervisedSection = field(default_factory=SupervisedSection)
    pipeline: PipelineSection = field(default_factory=PipelineSection)

    def __post_init__(self):
        validate(self)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return _build(cls, data, "")

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        for key, val in changes.items():
            node = d
            *head, last = key.split(".")
            for h in head:
                node = node[h]
            node[last] = val
        return ExperimentConfig.from_dict(d)


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object, got {type(data).__name__}")
    hints = get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown key '{where}{unknown[0]}'")
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        key = f"{path}.{f.name}" if path else f.name
        kwargs[f.name] = _coerce(hints[f.name], data[f.name], key)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or '<root>'}: {exc}") from exc


def _coerce(tp, value, key):
    if is_dataclass(tp):
        return _build(tp, value, key)
    optional = getattr(tp, "__args__", None) and type(None) in tp.__args__
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{key}: null is not allowed")
    base = next((a for a in getattr(tp, "__args__", (tp,)) if a is not type(None)), tp)
    if base is bool:
        ok = isinstance(value, bool)
    elif base is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif base is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif base is str:
        ok = isinstance(value, str)
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{key}: expected {base.__name__}, got {type(value).__name__}")
    return value


def _require(cond, key, msg):
    if not cond:
        raise ConfigError(f"{key}: {msg}")


def validate(cfg: ExperimentConfig) -> None:
    _require(cfg.dimension >= 2, "dimension", "must be >= 2")
    _require(cfg.noise in {f.value for f in NoiseFamily}, "noise",
             f"must be one of {sorted(f.value for f in NoiseFamily)}")
    _require(cfg.mu_norm >= 0 and math.isfinite(cfg.mu_norm), "mu_norm", "must be finite and >= 0")
    _require(cfg.mu_direction in ("e1", "random"), "mu_direction", "must be 'e1' or 'random'")
    _require(cfg.R > 0, "R", "must be positive")
    _require(cfg.loss in {k.value for k in LossKind}, "loss", "must be 'exponential' or 'logistic'")
    _require(0 <= cfg.seed < 2**64, "seed", "must be an unsigned 64-bit integer")
    _require(cfg.trials >= 1, "trials", "must be >= 1")
    _require(0.0 <= cfg.min_pass_fraction <= 1.0, "min_pass_fraction", "must lie in [0, 1]")
    _require(cfg.err_mc_samples >= 100, "err_mc_samples", "must be >= 100")
    _require(cfg.max_iterations >= 1, "max_iterations", "must be >= 1")

    st = cfg.selftrain
    _require(st.schedule in ("practical", "theorem"), "selftrain.schedule", "must be 'practical' or 'theorem'")
    _require(0.0 < st.eps < 1.0, "selftrain.eps", "must lie in (0, 1)")
    _require(0.0 < st.delta < 1.0, "selftrain.delta", "must lie in (0, 1)")
    _require(st.sigma is None or st.sigma > 0, "selftrain.sigma", "must be positive")
    _require(st.eta is None or st.eta >= 0, "selftrain.eta", "must be nonnegative")
    _require(st.batch_size is None or st.batch_size >= 1, "selftrain.batch_size", "must be >= 1")
    _require(st.iterations is None or st.iterations >= 1, "selftrain.iterations", "must be >= 1")
    _require(st.c_b > 0, "selftrain.c_b", "must be positive")
    init = st.init
    _require(init.mode in ("angle", "file"), "selftrain.init.mode", "must be 'angle' or 'file'")
    _require(0.0 <= init.theta0_deg < 90.0, "selftrain.init.theta0_deg", "must lie in [0, 90) degrees")
    _require(init.mode != "file" or init.path, "selftrain.init.path", "required when mode is 'file'")

    sv = cfg.supervised
    _require(sv.schedule in ("practical", "theorem2"), "supervised.schedule",
             "must be 'practical' or 'theorem2'")
    _require(sv.eta > 0, "supervised.eta", "must be positive")
    _require(sv.iterations >= 1, "supervised.iterations", "must be >= 1")
    _require(sv.runs >= 1, "supervised.runs", "must be >= 1")
    _require(sv.delta is None or 0.0 < sv.delta < 1.0, "supervised.delta", "must lie in (0, 1)")
    _require(sv.validation_size >= 1, "supervised.validation_size", "must be >= 1")
    _require(0.0 < sv.target_err <= 1.0, "supervised.target_err", "must lie in (0, 1]")
    _require(sv.c_err is None or 0.0 < sv.c_err < 1.0, "supervised.c_err", "must lie in (0, 1)")

    _require(0.0 < cfg.pipeline.handoff_threshold <= 0.5, "pipeline.handoff_threshold",
             "must lie in (0, 0.5]")


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return ExperimentConfig.from_dict(data)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def resolve_seed(cfg: ExperimentConfig, flag_seed: int | None = None, environ=None) -> ExperimentConfig:
    """Apply the seed precedence: explicit flag, then environment, then file."""
    environ = os.environ if environ is None else environ
    if flag_seed is not None:
        return cfg.replace(seed=int(flag_seed))
    raw = environ.get(SEED_ENV)
    if raw not in (None, ""):
        try:
            seed = int(raw)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from exc
        return cfg.replace(seed=seed)
    return cfg


__all__ = [
    "ExperimentConfig",
    "InitConfig",
    "PipelineSection",
    "SEED_ENV",
    "SelfTrainSection",
    "SupervisedSection",
    "load_config",
    "parse_config",
    "resolve_seed",
]
