from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Mapping, Optional

import psutil

from .errors import ConfigError

logger = logging.getLogger(__name__)

THREADS_ENV = "DF_EVAL_THREADS"

POLARIZATIONS = ("theta", "phi")
KINDS = ("directivity", "realized")
WEIGHTINGS = ("linear",)
AMBIGUITY_REFERENCES = ("geometric", "self")
COVARIANCE_MODES = ("expected", "random")

_BUILTIN_DEFAULTS: dict[str, Any] = {
    "theta_min_deg": 45.0,
    "theta_max_deg": 90.0,
    "grid_count": 250,
    "polarization": "theta",
    "kind": "directivity",
    "weighting": "linear",
    "exclusion_radius_deg": 30.0,
    "relative_threshold": 0.5,
    "ambiguity_reference": "geometric",
    "reference_doas_deg": [[80.0, 90.0]],
    "source_deg": [80.0, 90.0],
    "snr_db": 0.0,
    "snapshot_count": 1,
    "signal_power": 1.0,
    "covariance_mode": "expected",
    "seed": 0,
    "crb_step_deg": 0.1,
    "min_size": 1,
    "max_size": None,
    "most_significant": None,
    "degeneracy_tolerance_db": 0.05,
    "best_tolerance_db": 0.01,
    "output_grid_step_deg": 1.0,
    "emit_sorted_matrix": True,
    "emit_permutations": True,
    "emit_uncertainty_vectors": True,
    "emit_summary": True,
}


def default_config_path() -> str:
    script_dir = os.path.dirname(os.path.abspath(__file__))
    return os.path.join(script_dir, "..", "configuration_templates", "run_defaults.json")


def load_config(path: Optional[str] = None) -> dict[str, Any]:
    """
    Load run settings.

    Without a path the shipped configuration_templates/run_defaults.json is
    used; if that file is missing the built-in defaults apply. Keys absent from
    the file are filled from the built-in defaults.
    """
    candidate = path or default_config_path()
    if not os.path.exists(candidate):
        if path:
            raise ConfigError(f"Configuration file not found: {path}")
        print(f"Run defaults not found. Looked for: {candidate}. Using built-in defaults.")
        return dict(_BUILTIN_DEFAULTS)

    try:
        with open(candidate, "r", encoding="utf-8") as f:
            cfg = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Configuration file {candidate} is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError(f"Configuration file {candidate} must hold a JSON object")

    unknown = sorted(set(cfg) - set(_BUILTIN_DEFAULTS))
    if unknown:
        raise ConfigError(f"Unknown configuration keys in {candidate}: {', '.join(unknown)}")
    for key, value in _BUILTIN_DEFAULTS.items():
        cfg.setdefault(key, value)
    logger.debug("Loaded configuration from %s", candidate)
    return cfg


@dataclass
class RunConfig:
    """Fully resolved settings of one CLI run (defaults: 45-90 deg cap, 250 DoAs, theta polarization)."""

    theta_min_deg: float = 45.0
    theta_max_deg: float = 90.0
    grid_count: int = 250
    polarization: str = "theta"
    kind: str = "directivity"
    weighting: str = "linear"
    exclusion_radius_deg: float = 30.0
    relative_threshold: float = 0.5
    ambiguity_reference: str = "geometric"
    reference_doas_deg: list = field(default_factory=lambda: [[80.0, 90.0]])
    source_deg: list = field(default_factory=lambda: [80.0, 90.0])
    snr_db: float = 0.0
    snapshot_count: int = 1
    signal_power: float = 1.0
    covariance_mode: str = "expected"
    seed: int = 0
    crb_step_deg: float = 0.1
    min_size: int = 1
    max_size: Optional[int] = None
    most_significant: Optional[int] = None
    degeneracy_tolerance_db: float = 0.05
    best_tolerance_db: float = 0.01
    output_grid_step_deg: float = 1.0
    emit_sorted_matrix: bool = True
    emit_permutations: bool = True
    emit_uncertainty_vectors: bool = True
    emit_summary: bool = True

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.theta_min_deg < self.theta_max_deg <= 90.0:
            raise ConfigError(
                f"Grid bounds must satisfy 0 <= theta_min < theta_max <= 90 deg, got "
                f"{self.theta_min_deg}, {self.theta_max_deg}"
            )
        if int(self.grid_count) < 1:
            raise ConfigError(f"grid_count must be >= 1, got {self.grid_count}")
        _check_choice("polarization", self.polarization, POLARIZATIONS)
        _check_choice("kind", self.kind, KINDS)
        _check_choice("weighting", self.weighting, WEIGHTINGS)
        _check_choice("ambiguity_reference", self.ambiguity_reference, AMBIGUITY_REFERENCES)
        _check_choice("covariance_mode", self.covariance_mode, COVARIANCE_MODES)
        if not self.exclusion_radius_deg > 0:
            raise ConfigError(f"exclusion_radius_deg must be > 0, got {self.exclusion_radius_deg}")
        if not 0 < self.relative_threshold <= 1:
            raise ConfigError(f"relative_threshold must lie in (0, 1], got {self.relative_threshold}")
        if int(self.snapshot_count) < 1:
            raise ConfigError(f"snapshot_count must be >= 1, got {self.snapshot_count}")
        try:
            self.snr_db = float(self.snr_db)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"snr_db must be a number or \"inf\", got {self.snr_db!r}") from e
        if math.isnan(self.snr_db):
            raise ConfigError("snr_db must be a number")
        if float(self.signal_power) < 0:
            raise ConfigError(f"signal_power must be >= 0, got {self.signal_power}")
        if not self.crb_step_deg > 0:
            raise ConfigError(f"crb_step_deg must be > 0, got {self.crb_step_deg}")
        if not self.output_grid_step_deg > 0:
            raise ConfigError(f"output_grid_step_deg must be > 0, got {self.output_grid_step_deg}")
        if len(self.source_deg) != 2:
            raise ConfigError(f"source_deg must be a [theta, phi] pair, got {self.source_deg}")
        for pair in self.reference_doas_deg:
            if len(pair) != 2:
                raise ConfigError(f"reference DoAs must be [theta, phi] pairs, got {pair}")
        if self.degeneracy_tolerance_db < 0 or self.best_tolerance_db < 0:
            raise ConfigError("tolerances must be >= 0")
        if self.most_significant is not None and int(self.most_significant) < 1:
            raise ConfigError(f"most_significant must be >= 1, got {self.most_significant}")

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - names)
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}")
        return cls(**dict(values))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def resolve_run_config(
    file_config: Optional[Mapping[str, Any]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """Apply precedence flags > file > defaults; ``None`` overrides mean "not given"."""
    merged: dict[str, Any] = dict(_BUILTIN_DEFAULTS)
    if file_config:
        merged.update(file_config)
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_mapping(merged)


def resolve_worker_count(requested: Optional[int] = None) -> int:
    """Worker count for thread pools: DF_EVAL_THREADS, else the CPU count, capped by ``requested``."""
    env = os.environ.get(THREADS_ENV)
    if env is not None and env.strip():
        try:
            workers = int(env)
        except ValueError as e:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from e
        if workers < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1, got {workers}")
    else:
        workers = psutil.cpu_count(logical=True) or 1
    if requested is not None:
        if requested < 1:
            raise ConfigError(f"worker count must be >= 1, got {requested}")
        workers = min(workers, requested)
    return workers


def _check_choice(name: str, value: str, choices: tuple[str, ...]) -> None:
    if value not in choices:
        raise ConfigError(f"{name} must be one of {', '.join(choices)}; got {value!r}")
