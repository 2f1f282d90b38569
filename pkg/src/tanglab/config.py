"""Experiment configuration: YAML files with includes, validated at load.

A config file is a YAML mapping.  The optional ``include`` key names other
files (relative to the including file) whose trees are deep-merged first, so
shared family and domain blocks can live in one place.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .bernstein import FAMILIES, DomainError, fit_A3, from_config
from .montecarlo import DEFAULT_BUDGET, DEFAULT_C_TIME, DEFAULT_EPS

EXPERIMENTS = ("assumptions-report", "kernel-bounds", "stable-oracle", "tangential-limit",
               "lemma-suite")
# experiments that pair an approach region with exterior data
PAIRED = ("tangential-limit", "lemma-suite")
OUTPUT_ROOT_ENV = "LAB_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "lab-runs"

# one representative parameter set per built-in family
DEFAULT_FAMILIES = (
    {"family": "stable", "alpha": 1.0},
    {"family": "power_mix", "alpha": 0.5, "kappa": 0.5},
    {"family": "relativistic", "alpha": 1.0, "m": 1.0},
    {"family": "stable_sum", "alpha": 1.5, "kappa": 0.5},
    {"family": "stable_log", "alpha": 1.0, "kappa": 0.25},
    {"family": "geometric", "alpha": 1.0},
    {"family": "relativistic_geometric", "alpha": 1.0, "m": 1.0},
)


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


class HypothesisViolation(ConfigError):
    """Region and exterior data fall outside the admissible parameter set."""


def deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def load_tree(path, _stack: tuple = ()) -> dict:
    """Read a YAML file and resolve its ``include`` chain."""
    path = Path(path).resolve()
    if path in _stack:
        raise ConfigError(f"include cycle through {path}")
    try:
        tree = yaml.safe_load(path.read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not isinstance(tree, dict):
        raise ConfigError(f"{path} must hold a mapping")
    inc = tree.pop("include", [])
    merged: dict = {}
    for rel in [inc] if isinstance(inc, str) else inc:
        merged = deep_merge(merged, load_tree(path.parent / rel, _stack + (path,)))
    return deep_merge(merged, tree)


def _as_p(p) -> float:
    if p in (None, "inf", "infinity", math.inf):
        return math.inf
    return float(p)


@dataclass
class MCParams:
    N: int = 100_000
    seed: int = 0
    eps: float = DEFAULT_EPS
    c_time: float = DEFAULT_C_TIME
    max_steps: int = DEFAULT_BUDGET
    workers: int = 1


@dataclass
class ExperimentConfig:
    experiment: str
    name: str = "run"
    d: int = 2
    family: Optional[dict] = None
    families: list = field(default_factory=list)
    domain: dict = field(default_factory=lambda: {"shape": "ball", "radius": 1.0})
    region: dict = field(default_factory=dict)
    exterior: Optional[dict] = None
    mc: MCParams = field(default_factory=MCParams)
    params: dict = field(default_factory=dict)
    counterexample: bool = False
    output: Optional[str] = None

    @property
    def family_specs(self) -> list:
        if self.families:
            return list(self.families)
        if self.family:
            return [self.family]
        return [dict(f) for f in DEFAULT_FAMILIES]

    @property
    def gamma(self) -> float:
        return float(self.region.get("gamma", 0.3))

    @property
    def xi_list(self) -> list:
        xi = self.region.get("xi")
        if xi is None:
            return []
        return [xi] if xi and not isinstance(xi[0], (list, tuple)) else list(xi)

    def echo(self) -> dict:
        return asdict(self)

    def output_dir(self) -> Path:
        if self.output:
            return Path(self.output)
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))
        return root / f"{self.name}-{self.experiment}"


_KEYS = {f for f in ExperimentConfig.__dataclass_fields__}


def config_from_tree(tree: dict, name: str = "run") -> ExperimentConfig:
    tree = dict(tree)
    unknown = set(tree) - _KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}")
    exp = tree.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    mc = tree.pop("mc", {}) or {}
    bad = set(mc) - set(MCParams.__dataclass_fields__)
    if bad:
        raise ConfigError(f"unknown mc keys {sorted(bad)}")
    tree.setdefault("name", name)
    try:
        cfg = ExperimentConfig(mc=MCParams(**mc), **tree)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return config_from_tree(load_tree(path), name=path.stem)


def hypothesis_problems(p: float, beta: float, gamma: float, delta: float) -> list[str]:
    """Conditions on (p, beta, gamma, delta) that fail, as readable strings."""
    inv_p = 0.0 if p == math.inf else 1 / p
    out = []
    if not p > 1:
        out.append(f"p = {p} not in (1, inf]")
    if not beta > inv_p:
        out.append(f"beta = {beta} <= 1/p = {inv_p}")
    if not 0 < gamma < beta - inv_p:
        out.append(f"gamma = {gamma} not in (0, beta - 1/p) = (0, {beta - inv_p})")
    if not delta > inv_p:
        out.append(f"delta = {delta} <= 1/p = {inv_p}")
    return out


def validate(cfg: ExperimentConfig) -> None:
    """Raise ConfigError on malformed input and HypothesisViolation on bad parameters."""
    if cfg.d < 2:
        raise ConfigError("need d >= 2")
    if cfg.mc.N < 1000 or cfg.mc.workers < 1:
        raise ConfigError("need mc.N >= 1000 and mc.workers >= 1")
    phis = []
    for spec in cfg.family_specs:
        if spec.get("family") not in FAMILIES:
            raise ConfigError(f"unknown family {spec.get('family')!r}")
        try:
            phis.append(from_config(spec))
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
    if cfg.experiment not in PAIRED:
        return
    if cfg.exterior is None:
        raise ConfigError(f"{cfg.experiment} needs an exterior block")
    p = _as_p(cfg.exterior.get("p"))
    beta = float(cfg.exterior.get("beta", 1.0))
    if cfg.exterior.get("family") == "indicator" and p < math.inf:
        beta = 1 / p
    problems = []
    for phi in phis:
        fit = fit_A3(phi)
        delta = fit.delta if fit.delta is not None else 0.0
        for q in cfg.params.get("q", []):
            if not (q >= 1 and (delta >= 1 or q < 1 / (1 - delta))):
                raise ConfigError(f"q = {q} outside [1, 1/(1-delta)) for {phi.label()}")
        problems += [f"{phi.label()}: {m}" for m in hypothesis_problems(p, beta, cfg.gamma, delta)]
    if problems and not cfg.counterexample:
        raise HypothesisViolation("; ".join(dict.fromkeys(problems)))
