"""Experiment configuration: flat TOML with dotted section keys.

Example::

    mode = "sde"
    seed = 7
    replicas = 10000
    orders = [1, 2, 3, 4]
    time_grid.start = 0.0
    time_grid.stop = 50.0
    time_grid.count = 51
    sde.p = 1.0
    sde.dt = 0.001

Every key is listed in :data:`SCHEMA`; anything else is rejected.
"""
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import tomli
import tomli_w

from .amcmc import MAX_N_SCALE
from .diffusion import SdeConfig

MODES = ("chain", "scaled", "sde", "moments", "hormander", "compare")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ChainOptions:
    p_acc: float = 0.44
    n_scale: int = 10000
    p: float = 1.0
    x0: float = 0.0
    theta0: float = 1.0
    steps: int = 100000
    horizon: float = 1.0
    window_start: int = 10000


@dataclass(frozen=True)
class HormanderOptions:
    p: float = 1.0
    epsilon: float = 1e-3
    x_min: float = -2.0
    x_max: float = 2.0
    x_count: int = 21
    eta_min: float = 0.1
    eta_max: float = 4.0
    eta_count: int = 21
    random_points: int = 1000
    fd_step: float = 1e-5
    tol: float = 1e-10
    rel_tol: float = 1e-5


@dataclass(frozen=True)
class SdeOptions:
    check_limit: bool = True
    halving_paths: int = 0
    theta_power_k: int = 2


@dataclass(frozen=True)
class CompareOptions:
    n_scales: tuple = (100, 1000, 10000)


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    seed: int = 0
    replicas: int = 1000
    output_dir: str = "out"
    orders: tuple = (1, 2, 3, 4)
    time_grid: tuple = ()
    trajectories: int = 5
    max_k: int = 20
    sde: SdeConfig = field(default_factory=SdeConfig)
    sde_options: SdeOptions = field(default_factory=SdeOptions)
    chain: ChainOptions = field(default_factory=ChainOptions)
    hormander: HormanderOptions = field(default_factory=HormanderOptions)
    compare: CompareOptions = field(default_factory=CompareOptions)


# dotted key -> (kind, target) where target is (section attribute, field name)
_SDE_KEYS = {f.name: "float" for f in fields(SdeConfig)}
SCHEMA = {
    "mode": ("str", (None, "mode")),
    "seed": ("int", (None, "seed")),
    "replicas": ("int", (None, "replicas")),
    "output_dir": ("str", (None, "output_dir")),
    "orders": ("int_list", (None, "orders")),
    "time_grid.points": ("float_list", None),
    "time_grid.start": ("float", None),
    "time_grid.stop": ("float", None),
    "time_grid.count": ("int", None),
    "output.trajectories": ("int", (None, "trajectories")),
    "moments.max_k": ("int", (None, "max_k")),
    "compare.n_scales": ("int_list", ("compare", "n_scales")),
    "sde.check_limit": ("bool", ("sde_options", "check_limit")),
    "sde.halving_paths": ("int", ("sde_options", "halving_paths")),
    "sde.theta_power_k": ("int", ("sde_options", "theta_power_k")),
}
SCHEMA.update({f"sde.{k}": (v, ("sde", k)) for k, v in _SDE_KEYS.items()})
for _sec, _cls in (("chain", ChainOptions), ("hormander", HormanderOptions)):
    for _f in fields(_cls):
        SCHEMA[f"{_sec}.{_f.name}"] = (_f.type.__name__, (_sec, _f.name))


def _flatten(doc, prefix=""):
    out = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key, kind, value):
    def bad():
        return ConfigError(f"{key}: expected {kind.replace('_', ' of ')}, got {value!r}")

    if kind == "str":
        if not isinstance(value, str):
            raise bad()
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise bad()
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad()
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad()
        return float(value)
    if kind in ("int_list", "float_list"):
        if not isinstance(value, list):
            raise bad()
        inner = kind.split("_")[0]
        return tuple(_coerce(key, inner, v) for v in value)
    raise AssertionError(kind)


def _default_grid(cfg):
    if cfg.mode == "sde":
        return tuple(np.linspace(0.0, cfg.sde.horizon, 51).tolist())
    if cfg.mode == "scaled":
        return tuple(np.linspace(0.0, cfg.chain.horizon, 11).tolist())
    if cfg.mode == "chain":
        return tuple(float(v) for v in np.linspace(0, cfg.chain.steps, 11).round())
    if cfg.mode == "compare":
        return (0.0, 0.5, 1.0)
    return (0.0,)


def _resolve_grid(flat, cfg):
    if "time_grid.points" in flat:
        if any(k in flat for k in ("time_grid.start", "time_grid.stop", "time_grid.count")):
            raise ConfigError("time_grid: give either points or start/stop/count, not both")
        return flat["time_grid.points"]
    parts = [k in flat for k in ("time_grid.start", "time_grid.stop", "time_grid.count")]
    if any(parts):
        if not all(parts):
            raise ConfigError("time_grid: start, stop and count must be given together")
        if flat["time_grid.count"] < 1:
            raise ConfigError("time_grid.count must be >= 1")
        return tuple(np.linspace(flat["time_grid.start"], flat["time_grid.stop"],
                                 flat["time_grid.count"]).tolist())
    return _default_grid(cfg)


def validate(cfg):
    if cfg.mode not in MODES:
        raise ConfigError(f"mode: must be one of {', '.join(MODES)}")
    if cfg.replicas < 1:
        raise ConfigError("replicas must be ≥ 1")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if cfg.mode in ("sde", "scaled", "chain", "compare"):
        if not cfg.orders:
            raise ConfigError("orders must be non-empty")
        if any(r < 0 for r in cfg.orders):
            raise ConfigError("orders must be non-negative")
    if len(cfg.time_grid) == 0 or np.any(np.diff(cfg.time_grid) <= 0) or cfg.time_grid[0] < 0:
        raise ConfigError("time_grid must be non-empty, non-negative and strictly increasing")
    if cfg.trajectories < 0:
        raise ConfigError("output.trajectories must be >= 0")
    if cfg.max_k < 1:
        raise ConfigError("moments.max_k must be >= 1")
    if not 0.0 < cfg.chain.p_acc < 1.0:
        raise ConfigError("chain.p_acc must lie in (0, 1)")
    if not cfg.chain.theta0 > 0:
        raise ConfigError("chain.theta0 must be positive")
    for n in (cfg.chain.n_scale, *cfg.compare.n_scales):
        if not 1 <= n <= MAX_N_SCALE:
            raise ConfigError(f"n_scale must be in [1, {MAX_N_SCALE}], got {n}")
        if not cfg.chain.p / n ** 0.5 < 1.0:
            raise ConfigError("chain.p/sqrt(n_scale) must be < 1")
    if cfg.hormander.epsilon <= 0:
        raise ConfigError("hormander.epsilon must be positive")
    if cfg.hormander.eta_min <= 0:
        raise ConfigError("hormander.eta_min must be positive")
    return cfg


def parse_config(text, mode=None):
    """Parse and validate a config document; ``mode`` fills in a missing mode key."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    flat = _flatten(doc)
    unknown = sorted(set(flat) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown key: {unknown[0]}")
    flat = {k: _coerce(k, SCHEMA[k][0], v) for k, v in flat.items()}
    if "mode" not in flat:
        if mode is None:
            raise ConfigError("mode: required")
        flat["mode"] = mode
    elif mode is not None and flat["mode"] != mode:
        raise ConfigError(f"mode: config says {flat['mode']!r} but {mode!r} was requested")

    top, sections = {}, {}
    for k, v in flat.items():
        target = SCHEMA[k][1]
        if target is None:
            continue
        sec, name = target
        if sec is None:
            top[name] = v
        else:
            sections.setdefault(sec, {})[name] = v
    if top["mode"] not in MODES:
        raise ConfigError(f"mode: must be one of {', '.join(MODES)}")
    built = {}
    for sec, cls in (("sde", SdeConfig), ("sde_options", SdeOptions), ("chain", ChainOptions),
                     ("hormander", HormanderOptions), ("compare", CompareOptions)):
        try:
            built[sec] = cls(**sections.get(sec, {}))
        except ValueError as exc:
            raise ConfigError(f"{sec.split('_')[0]}: {exc}") from None
    cfg = ExperimentConfig(**top, **built)
    cfg = replace(cfg, time_grid=tuple(float(t) for t in _resolve_grid(flat, cfg)))
    return validate(cfg)


def with_overrides(cfg, seed=None, replicas=None, output_dir=None):
    changes = {k: v for k, v in (("seed", seed), ("replicas", replicas),
                                 ("output_dir", output_dir)) if v is not None}
    return validate(replace(cfg, **changes))


def serialize_config(cfg):
    """TOML text that :func:`parse_config` maps back to an equal config."""
    doc = {
        "mode": cfg.mode, "seed": cfg.seed, "replicas": cfg.replicas,
        "output_dir": cfg.output_dir, "orders": list(cfg.orders),
        "time_grid": {"points": list(cfg.time_grid)},
        "output": {"trajectories": cfg.trajectories},
        "moments": {"max_k": cfg.max_k},
        "sde": {**asdict(cfg.sde), **asdict(cfg.sde_options)},
        "chain": asdict(cfg.chain),
        "hormander": asdict(cfg.hormander),
        "compare": {"n_scales": list(cfg.compare.n_scales)},
    }
    return tomli_w.dumps(doc)


def config_dict(cfg):
    return tomli.loads(serialize_config(cfg))
