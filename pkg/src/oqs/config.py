"""Experiment configuration: strict JSON schemas plus dataclass views.

Every config is validated against its experiment schema before anything is
computed. Unknown keys are rejected at every level.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError

EXPERIMENTS = ("errormap", "imbalance", "optim-compare", "brownian", "weights")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_range = {
    "oneOf": [
        {"type": "array", "items": _pos, "minItems": 1},
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["logspace"],
            "properties": {"logspace": {"type": "array", "items": _pos, "minItems": 3, "maxItems": 3}},
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["linspace"],
            "properties": {"linspace": {"type": "array", "items": _pos, "minItems": 3, "maxItems": 3}},
        },
    ]
}


def _obj(props, required=()):
    return {"type": "object", "additionalProperties": False,
            "properties": props, "required": list(required)}


_chain = _obj({
    "l": {"type": "integer", "minimum": 2, "maximum": 16},
    "N": {"type": "integer", "minimum": 0},
    "J": _pos,
    "V": _num,
})
_traj = _obj({
    "n_traj": {"type": "integer", "minimum": 1},
    "t_max": _pos,
    "burn_in": {"type": "number", "minimum": 0},
    "sample_dt": _pos,
})
_common = {
    "experiment": {"enum": list(EXPERIMENTS)},
    "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    "output": {"type": "string"},
}

SCHEMAS = {
    "errormap": _obj(dict(
        _common,
        model=_chain,
        bath=_obj({"Ec": _pos, "coupling": {"enum": ["local", "global"]}}),
        grid=_obj({"T": _range, "gamma": _range}),
        methods={"type": "array", "items": {"enum": ["rwa", "truncated"]}, "minItems": 1,
                 "uniqueItems": True},
        transient=_obj({
            "enabled": {"type": "boolean"},
            "n_times": {"type": "integer", "minimum": 2},
            "initial": {"enum": ["ground", "superposition"]},
            "time_dependent": {"type": "boolean"},
        }),
    ), ["experiment"]),
    "imbalance": _obj(dict(
        _common,
        model=_obj({"J": _pos, "V": _num}),
        bath=_obj({"Ec": _pos, "T_L": _pos, "T_R": _pos}),
        grid=_obj({"l": {"type": "array", "items": {"type": "integer", "minimum": 2, "maximum": 10},
                         "minItems": 1},
                   "gamma": _range}),
        methods={"type": "array", "minItems": 1, "uniqueItems": True,
                 "items": {"enum": ["redfield", "rwa", "truncated", "trajectories"]}},
        trajectories=_traj,
    ), ["experiment"]),
    "optim-compare": _obj(dict(
        _common,
        model=_chain,
        bath=_obj({"Ec": _pos, "T": _pos, "gamma": _pos}),
        fixed=_obj({"lambda_sq": _pos, "phi": {"type": "number", "exclusiveMinimum": -1.5707963,
                                                "exclusiveMaximum": 1.5707963}}),
        time=_obj({"t_max": _pos, "n_times": {"type": "integer", "minimum": 2}}),
        initial={"enum": ["ground", "superposition"]},
    ), ["experiment"]),
    "brownian": _obj(dict(
        _common,
        oscillator=_obj({"M": _pos, "Omega": _pos}),
        bath=_obj({"Ec": _pos, "gamma": _pos}),
        grid=_obj({"T": _range}),
        fock_tol={"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    ), ["experiment"]),
    "weights": _obj(dict(
        _common,
        model=_chain,
        bath=_obj({"Ec": _pos, "gamma": _pos}),
        site={"type": "integer", "minimum": 1},
        grid=_obj({"beta": _range}),
    ), ["experiment"]),
}


def expand_range(spec) -> tuple:
    if isinstance(spec, dict):
        if "logspace" in spec:
            lo, hi, n = spec["logspace"]
            return tuple(float(x) for x in np.geomspace(lo, hi, int(n)))
        lo, hi, n = spec["linspace"]
        return tuple(float(x) for x in np.linspace(lo, hi, int(n)))
    return tuple(float(x) for x in spec)


@dataclass(frozen=True)
class ChainModel:
    l: int = 5
    N: int = 2
    J: float = 1.0
    V: float = 2.0

    def __post_init__(self):
        if not 0 <= self.N <= self.l:
            raise ConfigError(f"particle number N={self.N} outside 0..{self.l}")


@dataclass(frozen=True)
class ErrorMapConfig:
    model: ChainModel = ChainModel()
    Ec: float = 17.0
    coupling: str = "local"
    T: tuple = expand_range({"logspace": [0.5, 50, 12]})
    gamma: tuple = expand_range({"logspace": [0.01, 1.0, 12]})
    methods: tuple = ("rwa", "truncated")
    transient: bool = True
    n_times: int = 101
    initial: str = "ground"
    time_dependent: bool = True

    @property
    def tau_factor(self) -> float:
        # averaging window tau_R = factor / (gamma J)
        return 2.0 if self.coupling == "local" else 1.0


@dataclass(frozen=True)
class ImbalanceConfig:
    J: float = 1.0
    V: float = 2.0
    Ec: float = 17.0
    T_L: float = 7.0
    T_R: float = 13.0
    l: tuple = (4, 6)
    gamma: tuple = (0.05, 0.1, 0.2, 0.4)
    methods: tuple = ("redfield", "rwa", "truncated")
    n_traj: int = 500
    t_max: float = 150.0
    burn_in: float = 25.0
    sample_dt: float = 0.5


@dataclass(frozen=True)
class OptimCompareConfig:
    model: ChainModel = ChainModel()
    Ec: float = 17.0
    T: float = 2.0
    gamma: float = 0.2
    lambda_sq: float = 1.0
    phi: float = 0.0
    t_max: float = None  # defaults to tau_R = 2 / (gamma J)
    n_times: int = 201
    initial: str = "ground"

    @property
    def horizon(self) -> float:
        return self.t_max if self.t_max is not None else 2.0 / (self.gamma * self.model.J)


@dataclass(frozen=True)
class BrownianConfig:
    M: float = 1.0
    Omega: float = 1.0
    Ec: float = 100.0
    gamma: float = 0.01
    T: tuple = (50.0, 75.0, 100.0, 150.0)
    fock_tol: float = 1e-8


@dataclass(frozen=True)
class WeightsConfig:
    model: ChainModel = ChainModel()
    Ec: float = 17.0
    gamma: float = 0.1
    site: int = 1
    beta: tuple = expand_range({"logspace": [1e-3, 1e-2, 7]})


@dataclass
class LoadedConfig:
    experiment: str
    params: object
    raw: dict
    sha256: str
    seed: int = 0
    output: str = None
    extra: dict = field(default_factory=dict)


def config_hash(raw: dict) -> str:
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _chain_model(d) -> ChainModel:
    return ChainModel(**d) if d else ChainModel()


def build_params(experiment: str, raw: dict):
    g = raw.get("grid", {})
    b = raw.get("bath", {})
    if experiment == "errormap":
        kw = {}
        if "T" in g:
            kw["T"] = expand_range(g["T"])
        if "gamma" in g:
            kw["gamma"] = expand_range(g["gamma"])
        if "methods" in raw:
            kw["methods"] = tuple(raw["methods"])
        tr = raw.get("transient", {})
        if "enabled" in tr:
            kw["transient"] = tr["enabled"]
        kw.update({k: tr[k] for k in ("n_times", "initial", "time_dependent") if k in tr})
        return ErrorMapConfig(model=_chain_model(raw.get("model")), **b, **kw)
    if experiment == "imbalance":
        kw = dict(raw.get("model", {}), **b, **raw.get("trajectories", {}))
        if "l" in g:
            kw["l"] = tuple(int(x) for x in g["l"])
        if "gamma" in g:
            kw["gamma"] = expand_range(g["gamma"])
        if "methods" in raw:
            kw["methods"] = tuple(raw["methods"])
        cfg = ImbalanceConfig(**kw)
        if not cfg.burn_in < cfg.t_max:
            raise ConfigError("trajectories.burn_in must be smaller than t_max")
        return cfg
    if experiment == "optim-compare":
        kw = dict(b, **raw.get("fixed", {}), **raw.get("time", {}))
        if "initial" in raw:
            kw["initial"] = raw["initial"]
        return OptimCompareConfig(model=_chain_model(raw.get("model")), **kw)
    if experiment == "brownian":
        kw = dict(raw.get("oscillator", {}), **b)
        if "T" in g:
            kw["T"] = expand_range(g["T"])
        if "fock_tol" in raw:
            kw["fock_tol"] = raw["fock_tol"]
        return BrownianConfig(**kw)
    if experiment == "weights":
        kw = dict(b)
        if "beta" in g:
            kw["beta"] = expand_range(g["beta"])
        if "site" in raw:
            kw["site"] = raw["site"]
        cfg = WeightsConfig(model=_chain_model(raw.get("model")), **kw)
        if cfg.site > cfg.model.l:
            raise ConfigError(f"site {cfg.site} outside the chain of length {cfg.model.l}")
        return cfg
    raise ConfigError(f"unknown experiment {experiment!r}")


def validate(raw, experiment: str) -> None:
    if experiment not in SCHEMAS:
        raise ConfigError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if raw.get("experiment", experiment) != experiment:
        raise ConfigError(f"config is for {raw['experiment']!r}, not {experiment!r}")
    try:
        jsonschema.validate(raw, SCHEMAS[experiment])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None


def load_config(path, experiment: str) -> LoadedConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    return parse_config(raw, experiment)


def parse_config(raw: dict, experiment: str) -> LoadedConfig:
    validate(raw, experiment)
    try:
        params = build_params(experiment, raw)
    except TypeError as exc:  # should not happen after validation
        raise ConfigError(str(exc)) from None
    return LoadedConfig(experiment, params, raw, config_hash(raw),
                        seed=int(raw.get("seed", 0)), output=raw.get("output"))
