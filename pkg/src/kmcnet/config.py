"""Simulation configuration: YAML schema, defaults and validation.

Every rejected value raises :class:`ConfigError` carrying the dotted key path,
e.g. ``agent_types[0].followback_probability``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

SCHEMA_VERSION = 1
CONTENT_CLASSES = ("political", "humorous", "musical")
FOLLOW_MODELS = ("random", "preferential", "agent", "agent_preferential", "trending")
DEGREE_KINDS = ("cumulative", "in", "out")
UNFOLLOW_MODES = ("none", "random", "chatty")
OMEGA_FORMS = ("exponential", "reciprocal", "table")
HAZARD_MODES = ("conditional", "literal")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class AgentTypeProfile:
    name: str
    add_weight: float = 1.0
    follow_rate: float = 0.0
    tweet_rate: float = 0.0
    followback_probability: float = 0.0
    hashtag_probability: float = 0.0
    # successful own follows after which the agent stops following; 0 = never stops
    follow_quota: int = 0
    content_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)


@dataclass(frozen=True)
class Region:
    name: str
    add_weight: float
    language_weights: tuple[float, ...]
    ideology_weights: tuple[float, ...]


@dataclass(frozen=True)
class AttributeSpace:
    languages: tuple[str, ...]
    ideologies: tuple[str, ...]
    regions: tuple[Region, ...]


@dataclass(frozen=True)
class FollowConfig:
    model: str = "random"
    degree: str = "cumulative"
    combined_weights: Optional[tuple[float, ...]] = None
    type_weights: Optional[tuple[float, ...]] = None
    retries: int = 10
    unfollow: str = "none"
    unfollow_rate: float = 0.0


@dataclass(frozen=True)
class OmegaSpec:
    form: str
    t_min: float = 1.0
    t_max: float = 600.0
    bins: int = 600
    spacing: str = "linear"
    table: Optional[tuple[float, ...]] = None


@dataclass(frozen=True)
class DiffusionConfig:
    omega: OmegaSpec
    base_alpha: tuple[float, float, float] = (0.0, 0.0, 0.0)
    hazard: str = "conditional"
    prune_epsilon: float = 1e-9
    prune_interval: int = 1000
    trending_capacity: int = 100


@dataclass(frozen=True)
class OutputConfig:
    edges: bool = True
    gexf: bool = False
    cascade: bool = True
    checkpoint: bool = True


@dataclass(frozen=True)
class SimulationConfig:
    agent_types: tuple[AgentTypeProfile, ...]
    attributes: AttributeSpace
    diffusion: DiffusionConfig
    seed: int = 0
    initial_agents: int = 0
    max_agents: Optional[int] = None
    max_sim_time: float = math.inf
    max_wall_time: float = math.inf
    add_rate: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    follow: FollowConfig = field(default_factory=FollowConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def type_index(self, name: str) -> int:
        for i, t in enumerate(self.agent_types):
            if t.name == name:
                return i
        raise KeyError(name)


# -- validation helpers -------------------------------------------------------

def _require(d: dict, key: str, path: str) -> Any:
    if key not in d:
        raise ConfigError(f"{path}{key}", "missing required key")
    return d[key]


def _check_keys(d: Any, allowed: set[str], path: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(path.rstrip(".") or "<root>", "expected a mapping")
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{path}{k}", "unknown key")
    return d


def _number(v: Any, key: str, lo: float = -math.inf, hi: float = math.inf,
            lo_open: bool = False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {v!r}")
    v = float(v)
    if math.isnan(v):
        raise ConfigError(key, "value is NaN")
    if v < lo or (lo_open and v == lo):
        raise ConfigError(key, f"value {v} below bound {'>' if lo_open else '>='} {lo}")
    if v > hi:
        raise ConfigError(key, f"value {v} above bound <= {hi}")
    return v


def _integer(v: Any, key: str, lo: int = 0) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(key, f"expected an integer, got {v!r}")
    if v < lo:
        raise ConfigError(key, f"value {v} below bound >= {lo}")
    return v


def _weights(v: Any, key: str, n: Optional[int] = None) -> tuple[float, ...]:
    if not isinstance(v, (list, tuple)) or len(v) == 0:
        raise ConfigError(key, "expected a nonempty list of weights")
    if n is not None and len(v) != n:
        raise ConfigError(key, f"expected {n} weights, got {len(v)}")
    w = [_number(x, f"{key}[{i}]", lo=0.0) for i, x in enumerate(v)]
    s = sum(w)
    if not s > 0:
        raise ConfigError(key, "weights must have a positive sum")
    return tuple(x / s for x in w)


def _named_weights(v: Any, names: tuple[str, ...], key: str) -> tuple[float, ...]:
    """Mapping name -> weight (missing names weigh 0), or a positional list."""
    if isinstance(v, dict):
        for k in v:
            if k not in names:
                raise ConfigError(f"{key}.{k}", f"unknown name; expected one of {list(names)}")
        v = [v.get(n, 0.0) for n in names]
    return _weights(v, key, len(names))


def _bool(v: Any, key: str) -> bool:
    if not isinstance(v, bool):
        raise ConfigError(key, f"expected true/false, got {v!r}")
    return v


def _choice(v: Any, choices: tuple[str, ...], key: str) -> str:
    if v not in choices:
        raise ConfigError(key, f"expected one of {list(choices)}, got {v!r}")
    return v


def _schedule(v: Any, key: str) -> tuple[tuple[float, float], ...]:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return ((0.0, _number(v, key, lo=0.0)),)
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError(key, "expected a rate or a list of [time, rate] pairs")
    out = []
    for i, pair in enumerate(v):
        k = f"{key}[{i}]"
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError(k, "expected a [time, rate] pair")
        t = _number(pair[0], f"{k}[0]", lo=0.0)
        r = _number(pair[1], f"{k}[1]", lo=0.0)
        if i == 0 and t != 0.0:
            raise ConfigError(f"{k}[0]", "schedule must start at time 0")
        if out and t <= out[-1][0]:
            raise ConfigError(f"{k}[0]", "schedule times must increase strictly")
        out.append((t, r))
    return tuple(out)


# -- section parsers ----------------------------------------------------------

_TYPE_KEYS = {"name", "add_weight", "follow_rate", "tweet_rate", "followback_probability",
              "hashtag_probability", "follow_quota", "content_weights"}


def _agent_type(d: Any, path: str) -> AgentTypeProfile:
    _check_keys(d, _TYPE_KEYS, path)
    name = _require(d, "name", path)
    if not isinstance(name, str) or not name:
        raise ConfigError(f"{path}name", "expected a nonempty string")
    return AgentTypeProfile(
        name=name,
        add_weight=_number(d.get("add_weight", 1.0), f"{path}add_weight", lo=0.0),
        follow_rate=_number(d.get("follow_rate", 0.0), f"{path}follow_rate", lo=0.0),
        tweet_rate=_number(d.get("tweet_rate", 0.0), f"{path}tweet_rate", lo=0.0),
        followback_probability=_number(d.get("followback_probability", 0.0),
                                       f"{path}followback_probability", 0.0, 1.0),
        hashtag_probability=_number(d.get("hashtag_probability", 0.0),
                                    f"{path}hashtag_probability", 0.0, 1.0),
        follow_quota=_integer(d.get("follow_quota", 0), f"{path}follow_quota"),
        content_weights=_named_weights(d.get("content_weights", [1, 1, 1]), CONTENT_CLASSES,
                                       f"{path}content_weights"),
    )


def _attributes(d: Any) -> AttributeSpace:
    path = "attributes."
    _check_keys(d, {"languages", "ideologies", "regions"}, path)

    def names(key: str) -> tuple[str, ...]:
        v = d.get(key, ["default"])
        if not isinstance(v, list) or not v or not all(isinstance(x, str) for x in v):
            raise ConfigError(f"{path}{key}", "expected a nonempty list of names")
        if len(set(v)) != len(v):
            raise ConfigError(f"{path}{key}", "duplicate names")
        return tuple(v)

    languages = names("languages")
    ideologies = names("ideologies")
    raw = _require(d, "regions", path)
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"{path}regions", "expected a nonempty list")
    regions = []
    for i, r in enumerate(raw):
        rp = f"{path}regions[{i}]."
        _check_keys(r, {"name", "add_weight", "language_weights", "ideology_weights"}, rp)
        regions.append(Region(
            name=str(_require(r, "name", rp)),
            add_weight=_number(r.get("add_weight", 1.0), f"{rp}add_weight", lo=0.0),
            language_weights=_weights(r.get("language_weights", [1.0] * len(languages)),
                                      f"{rp}language_weights", len(languages)),
            ideology_weights=_weights(r.get("ideology_weights", [1.0] * len(ideologies)),
                                      f"{rp}ideology_weights", len(ideologies)),
        ))
    if not sum(r.add_weight for r in regions) > 0:
        raise ConfigError(f"{path}regions", "region add weights must have a positive sum")
    return AttributeSpace(languages, ideologies, tuple(regions))


def _follow(d: Any, type_names: tuple[str, ...]) -> FollowConfig:
    path = "follow."
    _check_keys(d, {"model", "degree", "combined_weights", "type_weights", "retries",
                    "unfollow", "unfollow_rate"}, path)
    model = _choice(d.get("model", "random"), FOLLOW_MODELS + ("combined",), f"{path}model")
    combined = None
    if model == "combined":
        combined = _named_weights(_require(d, "combined_weights", path), FOLLOW_MODELS,
                                  f"{path}combined_weights")
    elif "combined_weights" in d:
        combined = _named_weights(d["combined_weights"], FOLLOW_MODELS, f"{path}combined_weights")
    type_weights = None
    if "type_weights" in d:
        type_weights = _named_weights(d["type_weights"], type_names, f"{path}type_weights")
    return FollowConfig(
        model=model,
        degree=_choice(d.get("degree", "cumulative"), DEGREE_KINDS, f"{path}degree"),
        combined_weights=combined,
        type_weights=type_weights,
        retries=_integer(d.get("retries", 10), f"{path}retries", lo=1),
        unfollow=_choice(d.get("unfollow", "none"), UNFOLLOW_MODES, f"{path}unfollow"),
        unfollow_rate=_number(d.get("unfollow_rate", 0.0), f"{path}unfollow_rate", lo=0.0),
    )


def _omega(d: Any) -> OmegaSpec:
    path = "diffusion.omega."
    _check_keys(d, {"form", "t_min", "t_max", "bins", "spacing", "table"}, path)
    form = _choice(_require(d, "form", path), OMEGA_FORMS, f"{path}form")
    t_min = _number(d.get("t_min", 1.0), f"{path}t_min", lo=0.0)
    t_max = _number(d.get("t_max", 600.0), f"{path}t_max", lo=t_min, lo_open=True)
    if math.isinf(t_max):
        raise ConfigError(f"{path}t_max", "must be finite")
    spacing = _choice(d.get("spacing", "linear"), ("linear", "log"), f"{path}spacing")
    if spacing == "log" and t_min <= 0:
        raise ConfigError(f"{path}t_min", "log spacing needs t_min > 0")
    table = None
    if form == "table":
        raw = _require(d, "table", path)
        if not isinstance(raw, list) or not raw:
            raise ConfigError(f"{path}table", "expected a nonempty list of densities")
        table = tuple(_number(x, f"{path}table[{i}]", lo=0.0) for i, x in enumerate(raw))
        if not sum(table) > 0:
            raise ConfigError(f"{path}table", "density is not normalizable (zero sum)")
        bins = len(table)
        if "bins" in d and d["bins"] != bins:
            raise ConfigError(f"{path}bins", "must equal the table length")
    else:
        bins = _integer(d.get("bins", 600), f"{path}bins", lo=1)
    return OmegaSpec(form, t_min, t_max, bins, spacing, table)


def _diffusion(d: Any) -> DiffusionConfig:
    path = "diffusion."
    _check_keys(d, {"omega", "base_alpha", "hazard", "prune_epsilon", "prune_interval",
                    "trending_capacity"}, path)
    alpha = d.get("base_alpha", 0.0)
    if isinstance(alpha, (int, float)) and not isinstance(alpha, bool):
        a = _number(alpha, f"{path}base_alpha", 0.0, 1.0)
        base_alpha = (a, a, a)
    else:
        _check_keys(alpha, set(CONTENT_CLASSES), f"{path}base_alpha.")
        base_alpha = tuple(_number(alpha.get(c, 0.0), f"{path}base_alpha.{c}", 0.0, 1.0)
                           for c in CONTENT_CLASSES)
    return DiffusionConfig(
        omega=_omega(_require(d, "omega", path)),
        base_alpha=base_alpha,
        hazard=_choice(d.get("hazard", "conditional"), HAZARD_MODES, f"{path}hazard"),
        prune_epsilon=_number(d.get("prune_epsilon", 1e-9), f"{path}prune_epsilon", lo=0.0),
        prune_interval=_integer(d.get("prune_interval", 1000), f"{path}prune_interval", lo=1),
        trending_capacity=_integer(d.get("trending_capacity", 100),
                                   f"{path}trending_capacity", lo=1),
    )


_TOP_KEYS = {"schema_version", "seed", "initial_agents", "max_agents", "max_sim_time",
             "max_wall_time", "add_rate", "agent_types", "attributes", "follow",
             "diffusion", "output"}


def config_from_dict(d: Any) -> SimulationConfig:
    _check_keys(d, _TOP_KEYS, "")
    version = _require(d, "schema_version", "")
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r}; "
                                            f"this build reads version {SCHEMA_VERSION}")
    raw_types = _require(d, "agent_types", "")
    if not isinstance(raw_types, list) or not raw_types:
        raise ConfigError("agent_types", "expected a nonempty list")
    types = tuple(_agent_type(t, f"agent_types[{i}].") for i, t in enumerate(raw_types))
    names = tuple(t.name for t in types)
    if len(set(names)) != len(names):
        raise ConfigError("agent_types", "duplicate type names")
    if not sum(t.add_weight for t in types) > 0:
        raise ConfigError("agent_types", "type add weights must have a positive sum")
    max_agents = d.get("max_agents")
    if max_agents is not None:
        max_agents = _integer(max_agents, "max_agents")
    out = d.get("output", {})
    _check_keys(out, {"edges", "gexf", "cascade", "checkpoint"}, "output.")
    follow = _follow(d.get("follow", {}), names)
    if follow.type_weights is None:
        typed = {"agent", "agent_preferential"}
        if follow.model == "combined":
            used = {m for m, w in zip(FOLLOW_MODELS, follow.combined_weights) if w > 0}
        else:
            used = {follow.model}
        if used & typed:
            raise ConfigError("follow.type_weights",
                              f"required by follow model {sorted(used & typed)[0]!r}")
    return SimulationConfig(
        agent_types=types,
        attributes=_attributes(_require(d, "attributes", "")),
        diffusion=_diffusion(_require(d, "diffusion", "")),
        seed=_integer(d.get("seed", 0), "seed"),
        initial_agents=_integer(d.get("initial_agents", 0), "initial_agents"),
        max_agents=max_agents,
        max_sim_time=_number(d.get("max_sim_time", math.inf), "max_sim_time", lo=0.0),
        max_wall_time=_number(d.get("max_wall_time", math.inf), "max_wall_time", lo=0.0),
        add_rate=_schedule(d.get("add_rate", 0.0), "add_rate"),
        follow=follow,
        output=OutputConfig(**{k: _bool(v, f"output.{k}") for k, v in out.items()}),
    )


def load_config(path: str | Path) -> SimulationConfig:
    path = Path(path)
    with path.open() as fh:
        try:
            d = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"YAML parse error: {exc}") from exc
    return config_from_dict(d)
