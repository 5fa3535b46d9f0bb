"""Experiment configuration: TOML files layered over per-benchmark defaults."""
from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .errors import ConfigError
from .mpc import MpcConfig, Obstacle
from .regression import EnsembleConfig
from .sysid import check_method

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

BENCHMARKS = ("lorenz", "f8", "drone", "external")
_DEFAULT_FILES = {"lorenz": "lorenz.toml", "f8": "f8.toml", "drone": "drone.toml",
                  "external": "plasma.toml"}
SECTIONS = ("train", "identify", "ensemble", "validate", "control")
_TOP_LEVEL = ("benchmark", "method", "methods", "noise_levels", "realizations", "seed",
              "data_lengths", "eta_per_dim", "out", "include_failed")


def default_dict(benchmark: str) -> dict:
    """Shipped defaults for ``benchmark`` as a plain nested dict."""
    if benchmark not in BENCHMARKS:
        raise ConfigError(f"unknown benchmark {benchmark!r}; expected one of {BENCHMARKS}")
    text = resources.files("wsmpc.configs").joinpath(_DEFAULT_FILES[benchmark]).read_text()
    return tomllib.loads(text)


def _merge(base: dict, over: Mapping, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, Mapping):
            if key not in SECTIONS:
                raise ConfigError(f"unknown section [{path}{key}]")
            out[key] = _merge(out.get(key, {}), val, f"{key}.")
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a run; sections hold benchmark parameters."""

    benchmark: str
    methods: tuple
    noise_levels: tuple = (0.0,)
    realizations: int = 1
    seed: int = 0
    data_lengths: tuple = ()
    eta_per_dim: tuple = ()
    out: str = "results"
    include_failed: bool = True
    train: dict = field(default_factory=dict)
    identify: dict = field(default_factory=dict)
    ensemble: dict = field(default_factory=dict)
    validate: dict = field(default_factory=dict)
    control: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.benchmark not in BENCHMARKS:
            raise ConfigError(f"unknown benchmark {self.benchmark!r}")
        if not self.methods:
            raise ConfigError("at least one method is required")
        for m in self.methods:
            check_method(m)
        if int(self.realizations) < 1:
            raise ConfigError("realizations must be >= 1")
        if not self.noise_levels:
            raise ConfigError("noise_levels must not be empty")
        if any(float(e) < 0 for e in self.noise_levels):
            raise ConfigError("noise levels must be non-negative")
        if any(int(n) < 2 for n in self.data_lengths):
            raise ConfigError("data lengths must be >= 2 samples")

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        unknown = [k for k in d if k not in _TOP_LEVEL and k not in SECTIONS]
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        methods = d.get("methods", ())
        if "method" in d:
            methods = [d["method"]]
        if isinstance(methods, str):
            methods = [methods]
        return cls(
            benchmark=d.get("benchmark", ""),
            methods=tuple(str(m).lower() for m in methods),
            noise_levels=tuple(float(e) for e in d.get("noise_levels", (0.0,))),
            realizations=int(d.get("realizations", 1)),
            seed=int(d.get("seed", 0)),
            data_lengths=tuple(int(n) for n in d.get("data_lengths", ())),
            eta_per_dim=tuple(float(e) for e in d.get("eta_per_dim", ())),
            out=str(d.get("out", "results")),
            include_failed=bool(d.get("include_failed", True)),
            **{s: dict(d.get(s, {})) for s in SECTIONS},
        )

    def to_dict(self) -> dict:
        d = {"benchmark": self.benchmark, "methods": list(self.methods),
             "noise_levels": list(self.noise_levels), "realizations": self.realizations,
             "seed": self.seed, "data_lengths": list(self.data_lengths),
             "eta_per_dim": list(self.eta_per_dim), "out": self.out,
             "include_failed": self.include_failed}
        for s in SECTIONS:
            d[s] = copy.deepcopy(getattr(self, s))
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        for key, val in changes.items():
            if key in SECTIONS:
                d[key] = _merge(d[key], val)
            else:
                d[key] = val
        return ExperimentConfig.from_dict(d)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; ``out`` does not affect results and is excluded."""
        d = self.to_dict()
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def ensemble_config(self) -> EnsembleConfig:
        return EnsembleConfig(**self.ensemble)

    def eta(self, level: float):
        """Noise magnitude for one sweep level: scalar, or per-dimension ratios times ``level``."""
        if self.eta_per_dim:
            return tuple(level * np.asarray(self.eta_per_dim))
        return float(level)

    def mpc_config(self, obstacle: Optional[Obstacle] = None,
                   quaternion_block: Optional[slice] = None) -> MpcConfig:
        c = self.control
        return MpcConfig(
            mp=int(c["mp"]), mc=int(c["mc"]), Ts=float(c["Ts"]), Q=c["Q"], Ru=c["Ru"],
            Rdu=c["Rdu"], u_min=c["u_min"], u_max=c["u_max"], du_min=c.get("du_min"),
            du_max=c.get("du_max"), y_index=tuple(c.get("y_index", ())),
            y_min=c.get("y_min"), y_max=c.get("y_max"), obstacle=obstacle,
            max_opt_iters=int(c.get("max_opt_iters", 100)),
            penalty=float(c.get("penalty", 1e4)), quaternion_block=quaternion_block)


def load_config(path=None, benchmark: Optional[str] = None,
                overrides: Optional[Mapping] = None) -> ExperimentConfig:
    """Read ``path`` (TOML) on top of the defaults of its benchmark.

    The benchmark comes from the file, else from ``benchmark``. ``overrides`` are applied
    last and take the same nested form as the file.
    """
    user: dict = {}
    if path is not None:
        try:
            user = tomllib.loads(Path(path).read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if overrides:
        user = _merge(user, overrides) if user else copy.deepcopy(dict(overrides))
    name = user.get("benchmark", benchmark)
    if name is None:
        raise ConfigError("no benchmark given")
    merged = _merge(default_dict(name), user)
    if "method" in user:
        merged["methods"] = [user["method"]]
        merged.pop("method", None)
    return ExperimentConfig.from_dict(merged)
