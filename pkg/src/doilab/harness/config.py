"""Experiment configuration: defaults, key=value config files, seed resolution."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from ..errors import ConfigError, ParameterError
from ..funcspace import REGISTRY_NAMES
from ..linalg import parse_p

EXPERIMENTS = (
    "counterexample",
    "main-estimate",
    "convergence",
    "ssf-continuity",
    "appendix-positive",
    "doi-identities",
    "kernel-report",
)

APPENDIX_F_NAMES = ("psi", "psi-power", "bump")

# per-experiment defaults for fields left unset
DEFAULT_TRIALS = {
    "counterexample": 1,
    "main-estimate": 100,
    "convergence": 1,
    "ssf-continuity": 3,
    "appendix-positive": 50,
    "doi-identities": 50,
    "kernel-report": 1,
}
DEFAULT_DIM = {"ssf-continuity": 12}
DEFAULT_F = {"appendix-positive": "psi-power"}

SEED_ENV = "DOI_LAB_SEED"
SEED_MAX = 2**64 - 1


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    dim: int = 10
    p: float = 2.0
    m: int = 3
    trials: int = 1
    seed: int = 0
    f_name: str = "bump"
    output_path: Optional[str] = None
    fmt: str = "text"
    dim_half: int = 1
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.dim < 1 or self.dim_half < 1 or self.trials < 1:
            raise ConfigError("dim, dim_half and trials must be positive")
        if self.m < 1 or self.m % 2 == 0:
            raise ConfigError(f"m must be an odd positive integer, got {self.m}")
        try:
            object.__setattr__(self, "p", parse_p(self.p))
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc
        if not 0 <= self.seed <= SEED_MAX:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        names = APPENDIX_F_NAMES if self.experiment == "appendix-positive" else REGISTRY_NAMES
        if self.f_name not in names:
            raise ConfigError(f"unknown function {self.f_name!r} for {self.experiment}; choose from {names}")
        if self.fmt not in ("csv", "json", "text"):
            raise ConfigError(f"unknown format {self.fmt!r}")

    def tol(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default))

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["p"] = "inf" if d["p"] == np.inf else d["p"]
        d.pop("output_path")
        d.pop("fmt")
        return d

    def with_(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)


# config-file keys mirror the CLI flags
_KEYMAP = {
    "dim": ("dim", int),
    "p": ("p", str),
    "m": ("m", int),
    "trials": ("trials", int),
    "seed": ("seed", int),
    "f": ("f_name", str),
    "out": ("output_path", str),
    "format": ("fmt", str),
    "dim-half": ("dim_half", int),
    "dim_half": ("dim_half", int),
}


def parse_config_text(text: str) -> dict:
    """Flat key=value lines; '#' starts a comment; keys like ``tol.name`` set
    tolerance overrides."""
    out: dict = {}
    tols: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key.startswith("tol."):
                tols[key[4:]] = float(value)
            elif key in _KEYMAP:
                name, conv = _KEYMAP[key]
                out[name] = conv(value)
            else:
                raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"config line {lineno}: bad value {value!r}") from exc
    if tols:
        out["tolerances"] = tols
    return out


def load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc


def resolve_seed(flag: Optional[int], file_value: Optional[int], env=None) -> int:
    """Flag, then config file, then $DOI_LAB_SEED, then 0."""
    env = os.environ if env is None else env
    for v in (flag, file_value):
        if v is not None:
            return int(v)
    raw = env.get(SEED_ENV)
    if raw:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from exc
    return 0


def build_config(experiment: str, flags: dict, file_values: Optional[dict] = None, env=None) -> ExperimentConfig:
    """Merge defaults < config file < flags (None means 'not given')."""
    file_values = dict(file_values or {})
    merged: dict = {
        "trials": DEFAULT_TRIALS[experiment],
        "dim": DEFAULT_DIM.get(experiment, 10),
        "f_name": DEFAULT_F.get(experiment, "bump"),
    }
    seed = resolve_seed(flags.get("seed"), file_values.pop("seed", None), env)
    merged.update(file_values)
    merged.update({k: v for k, v in flags.items() if v is not None and k != "seed"})
    merged["seed"] = seed
    return ExperimentConfig(experiment=experiment, **merged)
