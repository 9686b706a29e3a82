"""Experiment configuration: flat key-value text with sections.

An empty config resolves to the standard experiment: 32 agents on a 0.7
edge-probability random graph, 10-dimensional linear model with noise
variance 0.01, 300 iterations, the five tuned aggregators, and no attack.
Seeds given as ``auto`` are materialized deterministically from the master
seed, so a resolved config reproduces every output byte.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import AttackKind, AttackSpec
from .estimators import (
    TALWAR_C_95,
    TRIM_ALPHA_95,
    TUKEY_C_95,
    AggregatorKind,
    AggregatorSpec,
)


class ConfigError(ValueError):
    """Raised on malformed config text or invalid parameter combinations."""


AGGREGATOR_NAMES = frozenset(k.value for k in AggregatorKind)
# Trace CSVs carry the aggregator columns in exactly this order.
DEFAULT_AGGREGATOR_ORDER = ("sample_mean", "trimmed_mean", "talwar", "tukey", "median")
ATTACK_NAMES = frozenset(("none",) + tuple(k.value for k in AttackKind))
METRIC_CHOICES = ("both", "loss", "msd")


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int = 0
    # topology
    agents: int = 32
    edge_probability: float = 0.7
    malicious_counts: tuple[int, ...] = (0,)
    topology_seed: int | None = None
    # model
    dim: int = 10
    noise_var: float = 0.01
    weight_seed: int | None = None
    # learning
    step_size: float = 0.05
    iterations: int = 300
    huber_delta: float = 1.0
    batch_size: int = 1
    # aggregators
    aggregator_names: tuple[str, ...] = DEFAULT_AGGREGATOR_ORDER
    trim_alpha: float = TRIM_ALPHA_95
    talwar_c: float = TALWAR_C_95
    tukey_c: float = TUKEY_C_95
    fixed_point_tol: float = 1e-9
    fixed_point_max_iter: int = 100
    # attack
    attack_names: tuple[str, ...] = ("none",)
    lv_magnitude: float = 1000.0
    # sc sweep
    sweep_base_size: int = 100
    sweep_base_seed: int | None = None
    sweep_symmetric: bool = False
    sweep_grid_min: float = -10.0
    sweep_grid_max: float = 10.0
    sweep_grid_points: int = 401
    sweep_outlier_count: int = 1
    sweep_markers: bool = True
    # efficiency
    efficiency_trials: int = 100000
    efficiency_sample_size: int = 100
    # output
    output_directory: str = "out"
    metrics: str = "both"
    data_seed: int | None = None

    def aggregator_specs(self) -> list[AggregatorSpec]:
        out = []
        for name in self.aggregator_names:
            kind = AggregatorKind(name)
            out.append(
                AggregatorSpec(
                    kind,
                    alpha=self.trim_alpha if kind is AggregatorKind.TRIMMED_MEAN else 0.0,
                    c=self.talwar_c
                    if kind is AggregatorKind.TALWAR
                    else self.tukey_c
                    if kind is AggregatorKind.TUKEY
                    else 0.0,
                    fixed_point_tol=self.fixed_point_tol,
                    fixed_point_max_iter=self.fixed_point_max_iter,
                )
            )
        return out

    def attack_spec(self, name: str) -> AttackSpec | None:
        if name == "none":
            return None
        kind = AttackKind(name)
        if kind is AttackKind.LARGE_VALUE:
            return AttackSpec.large_value(self.lv_magnitude)
        if kind is AttackKind.TRIMMED_SCM:
            return AttackSpec.trimmed_scm(self.trim_alpha)
        if kind is AttackKind.TALWAR_SCM:
            return AttackSpec.talwar_scm(self.talwar_c)
        return AttackSpec.tukey_scm(self.tukey_c)


# section -> key -> (attribute, parser)
def _int(text: str) -> int:
    return int(text)


def _float(text: str) -> float:
    return float(text)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    parts = text.replace(",", " ").split()
    if not parts:
        raise ValueError("expected at least one integer")
    return tuple(int(p) for p in parts)


def _name_list(text: str) -> tuple[str, ...]:
    parts = tuple(text.replace(",", " ").split())
    if not parts:
        raise ValueError("expected at least one name")
    return parts


def _seed(text: str) -> int | None:
    if text.strip().lower() == "auto":
        return None
    return int(text)


_SCHEMA = {
    "experiment": {"master_seed": ("master_seed", _int), "data_seed": ("data_seed", _seed)},
    "topology": {
        "agents": ("agents", _int),
        "edge_probability": ("edge_probability", _float),
        "malicious_counts": ("malicious_counts", _int_list),
        "seed": ("topology_seed", _seed),
    },
    "model": {
        "dim": ("dim", _int),
        "noise_var": ("noise_var", _float),
        "weight_seed": ("weight_seed", _seed),
    },
    "learning": {
        "step_size": ("step_size", _float),
        "iterations": ("iterations", _int),
        "huber_delta": ("huber_delta", _float),
        "batch_size": ("batch_size", _int),
    },
    "aggregators": {
        "schemes": ("aggregator_names", _name_list),
        "trim_alpha": ("trim_alpha", _float),
        "talwar_c": ("talwar_c", _float),
        "tukey_c": ("tukey_c", _float),
        "fixed_point_tol": ("fixed_point_tol", _float),
        "fixed_point_max_iter": ("fixed_point_max_iter", _int),
    },
    "attack": {
        "schemes": ("attack_names", _name_list),
        "lv_magnitude": ("lv_magnitude", _float),
    },
    "sweep": {
        "base_size": ("sweep_base_size", _int),
        "base_seed": ("sweep_base_seed", _seed),
        "symmetric": ("sweep_symmetric", _bool),
        "grid_min": ("sweep_grid_min", _float),
        "grid_max": ("sweep_grid_max", _float),
        "grid_points": ("sweep_grid_points", _int),
        "outlier_count": ("sweep_outlier_count", _int),
        "markers": ("sweep_markers", _bool),
    },
    "efficiency": {
        "trials": ("efficiency_trials", _int),
        "sample_size": ("efficiency_sample_size", _int),
    },
    "output": {
        "directory": ("output_directory", str),
        "metrics": ("metrics", str),
    },
}


def _derive_seed(master_seed: int, stream: int) -> int:
    child = np.random.SeedSequence(master_seed).spawn(stream + 1)[stream]
    return int(np.random.default_rng(child).integers(0, 2**63))


def _resolve(cfg: ExperimentConfig) -> ExperimentConfig:
    updates = {}
    for attr, stream in (
        ("topology_seed", 0),
        ("weight_seed", 1),
        ("sweep_base_seed", 2),
        ("data_seed", 3),
    ):
        if getattr(cfg, attr) is None:
            updates[attr] = _derive_seed(cfg.master_seed, stream)
    return replace(cfg, **updates) if updates else cfg


def _validate(cfg: ExperimentConfig) -> None:
    def bad(msg: str) -> ConfigError:
        return ConfigError(msg)

    if cfg.agents < 2:
        raise bad("topology.agents must be at least 2")
    if not 0.0 < cfg.edge_probability <= 1.0:
        raise bad("topology.edge_probability must lie in (0, 1]")
    for m in cfg.malicious_counts:
        if not 0 <= m < cfg.agents / 2:
            raise bad(
                f"topology.malicious_counts entry {m} violates 0 <= m < agents/2"
                f" (agents={cfg.agents})"
            )
    if cfg.dim < 1:
        raise bad("model.dim must be at least 1")
    if cfg.noise_var <= 0:
        raise bad("model.noise_var must be positive")
    if cfg.step_size <= 0:
        raise bad("learning.step_size must be positive")
    if cfg.iterations < 1:
        raise bad("learning.iterations must be at least 1")
    if cfg.huber_delta <= 0:
        raise bad("learning.huber_delta must be positive")
    if cfg.batch_size < 1:
        raise bad("learning.batch_size must be at least 1")
    seen = set()
    for name in cfg.aggregator_names:
        if name not in AGGREGATOR_NAMES:
            raise bad(f"aggregators.schemes: unknown scheme {name!r}")
        if name in seen:
            raise bad(f"aggregators.schemes: duplicate scheme {name!r}")
        seen.add(name)
    if not 0.0 <= cfg.trim_alpha < 0.5:
        raise bad("aggregators.trim_alpha must lie in [0, 0.5)")
    if cfg.talwar_c <= 0 or cfg.tukey_c <= 0:
        raise bad("aggregators.talwar_c and tukey_c must be positive")
    if cfg.fixed_point_tol <= 0:
        raise bad("aggregators.fixed_point_tol must be positive")
    if cfg.fixed_point_max_iter < 1:
        raise bad("aggregators.fixed_point_max_iter must be at least 1")
    seen = set()
    for name in cfg.attack_names:
        if name not in ATTACK_NAMES:
            raise bad(f"attack.schemes: unknown scheme {name!r}")
        if name in seen:
            raise bad(f"attack.schemes: duplicate scheme {name!r}")
        seen.add(name)
    if "none" in cfg.attack_names and any(m > 0 for m in cfg.malicious_counts):
        raise bad(
            "attack.schemes includes 'none' but topology.malicious_counts has"
            " nonzero entries; malicious agents need an attack scheme"
        )
    if cfg.sweep_base_size < 1:
        raise bad("sweep.base_size must be at least 1")
    if not cfg.sweep_grid_min < cfg.sweep_grid_max:
        raise bad("sweep.grid_min must be below sweep.grid_max")
    if cfg.sweep_grid_points < 1:
        raise bad("sweep.grid_points must be at least 1")
    if cfg.sweep_outlier_count < 1:
        raise bad("sweep.outlier_count must be at least 1")
    if cfg.efficiency_trials < 1000:
        raise bad("efficiency.trials must be at least 1000")
    if cfg.efficiency_sample_size < 2:
        raise bad("efficiency.sample_size must be at least 2")
    if cfg.metrics not in METRIC_CHOICES:
        raise bad(f"output.metrics must be one of {METRIC_CHOICES}")


def parse_config(text: str, master_seed: int | None = None) -> ExperimentConfig:
    """Parse, apply defaults, materialize seeds, and validate.

    Unknown sections or keys are rejected; every diagnostic names the
    offending section and key.  ``master_seed`` overrides the config value
    before any auto seed is materialized.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"config parse error: {err}") from err
    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            attr, convert = _SCHEMA[section][key]
            try:
                values[attr] = convert(raw)
            except ValueError as err:
                raise ConfigError(
                    f"invalid value for {section}.{key}: {raw!r} ({err})"
                ) from err
    if master_seed is not None:
        values["master_seed"] = master_seed
    cfg = _resolve(ExperimentConfig(**values))
    _validate(cfg)
    return cfg


def load_config(path, master_seed: int | None = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), master_seed=master_seed)


def resolved_text(cfg: ExperimentConfig) -> str:
    """Emit the fully materialized config; re-parsing reproduces ``cfg``."""
    out = io.StringIO()
    writer = configparser.ConfigParser(interpolation=None)
    for section, keys in _SCHEMA.items():
        writer.add_section(section)
        for key, (attr, _) in keys.items():
            value = getattr(cfg, attr)
            if isinstance(value, tuple):
                rendered = " ".join(str(v) for v in value)
            elif isinstance(value, bool):
                rendered = "true" if value else "false"
            elif isinstance(value, float):
                rendered = repr(value)
            else:
                rendered = str(value)
            writer.set(section, key, rendered)
    writer.write(out)
    return out.getvalue()


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(
    path, command: str, cfg: ExperimentConfig, outputs: list[Path]
) -> None:
    """Completion marker: everything needed to reproduce the output bytes."""
    payload = {
        "version": __version__,
        "command": command,
        "master_seed": cfg.master_seed,
        "derived_seeds": {
            "topology_seed": cfg.topology_seed,
            "weight_seed": cfg.weight_seed,
            "sweep_base_seed": cfg.sweep_base_seed,
            "data_seed": cfg.data_seed,
        },
        "resolved_config": resolved_text(cfg),
        "outputs": {
            str(p.name): file_sha256(p) for p in sorted(outputs, key=lambda p: p.name)
        },
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
