"""Run configuration read from a TOML file."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ValidationError
from .relaxation import MAX_ITER_NONSMOOTH, MAX_ITER_SMOOTH
from .roundswap import MAX_SWAP_EVALS


@dataclass
class Config:
    sigma: float = 1.0
    lam: float = math.inf  # prior variance; inf means no prior
    theta: list | None = None  # C-factor per group
    headloss: str = "H-W"
    fixed_sensors: list = field(default_factory=list)
    excluded: list = field(default_factory=list)
    excluded_groups: list = field(default_factory=list)
    flow_sensors: list = field(default_factory=list)
    N: int = 5
    betas: list | None = None
    threads: int = 1
    max_iter_smooth: int = MAX_ITER_SMOOTH
    max_iter_nonsmooth: int = MAX_ITER_NONSMOOTH
    max_swap_evals: int = MAX_SWAP_EVALS
    swap_polish: bool = True
    cache_dir: str | None = None

    def problem_kwargs(self):
        return dict(theta=self.theta, flow_sensors=self.flow_sensors,
                    fixed=self.fixed_sensors, excluded=self.excluded, sigma=self.sigma,
                    lam=self.lam, excluded_groups=self.excluded_groups,
                    headloss=self.headloss, cache_dir=self.cache_dir)

    def to_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["lam"] = None if math.isinf(self.lam) else self.lam
        return out


# TOML key -> attribute
_ALIASES = {"lambda": "lam"}
_ITERATIONS = {"smooth": "max_iter_smooth", "nonsmooth": "max_iter_nonsmooth",
               "swap_evals": "max_swap_evals"}


def config_from_dict(data):
    cfg = Config()
    names = {f.name for f in fields(Config)}
    for key, value in data.items():
        if key == "iterations":
            if not isinstance(value, dict):
                raise ValidationError("[iterations] must be a table")
            for sub, v in value.items():
                if sub not in _ITERATIONS:
                    raise ValidationError(f"unknown key iterations.{sub}")
                setattr(cfg, _ITERATIONS[sub], v)
            continue
        attr = _ALIASES.get(key, key)
        if key == "lam" or attr not in names:
            raise ValidationError(f"unknown config key {key!r}")
        setattr(cfg, attr, value)
    _validate(cfg)
    return cfg


def _validate(cfg):
    try:
        cfg.sigma = float(cfg.sigma)
        cfg.lam = float(cfg.lam)
    except (TypeError, ValueError):
        raise ValidationError("sigma and lambda must be numbers")
    if cfg.sigma <= 0 or cfg.lam <= 0:
        raise ValidationError("sigma and lambda must be positive")
    if cfg.theta is not None:
        if not isinstance(cfg.theta, list) or not cfg.theta:
            raise ValidationError("theta must be a non-empty list of C-factors")
        cfg.theta = [float(t) for t in cfg.theta]
        if min(cfg.theta) <= 0:
            raise ValidationError("theta entries must be positive")
    if cfg.headloss not in ("H-W", "D-W"):
        raise ValidationError("headloss must be 'H-W' or 'D-W'")
    for name in ("fixed_sensors", "excluded", "excluded_groups", "flow_sensors"):
        if not isinstance(getattr(cfg, name), list):
            raise ValidationError(f"{name} must be a list")
    for name in ("N", "threads", "max_iter_smooth", "max_iter_nonsmooth", "max_swap_evals"):
        v = getattr(cfg, name)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ValidationError(f"{name} must be a positive integer")
    if cfg.betas is not None:
        if not isinstance(cfg.betas, list) or not cfg.betas:
            raise ValidationError("betas must be a non-empty list")
        cfg.betas = [float(b) for b in cfg.betas]
        if any(not 0 < b < 1 for b in cfg.betas):
            raise ValidationError("betas must lie strictly between 0 and 1")
    if not isinstance(cfg.swap_polish, bool):
        raise ValidationError("swap_polish must be true or false")


def load_config(path=None):
    if path is None:
        return Config()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)
