"""Flat TOML configuration shared by the harness and the command line.

Every key mirrors a :class:`SimConfig` field; unknown keys are rejected so a
typo never silently falls back to a default.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, fields
from functools import lru_cache
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from switchsel.criteria import KINDS, Criterion, NestedModel
from switchsel.errors import ConfigError
from switchsel.evidence import (BetaPrior, GammaPrior, InverseGammaPrior, NormalInverseGammaPrior,
                                NormalPrior, PointMass)
from switchsel.expfam import FAMILIES, LossKind, NestedPair, get_family
from switchsel.switchcrit import SwitchPrior

ESTIMATORS = ("mle", "map", "truncated")
HARNESS_FAMILIES = ("gaussian", "bernoulli", "poisson")
ORACLE_CRITERIA = ("always0", "always1")

_DEFAULT_NULL = {"gaussian": (0.0,), "bernoulli": (0.5,), "poisson": (1.0,), "gaussian_mv": (0.0,)}


@dataclass(frozen=True)
class SimConfig:
    seed: int = 20240611
    reps: int = 2000
    workers: int = 1
    chunk: int = 250

    # model
    family: str = "gaussian"
    sigma: float = 1.0
    m0: int = -1  # -1: singleton null for 1-d families, m1 - 1 otherwise
    null_tail: tuple = ()
    prior_mean: float = 0.0
    prior_var: float = 1.0
    beta_a: float = 1.0
    beta_b: float = 1.0
    gamma_shape: float = 1.0
    gamma_rate: float = 1.0
    nig_kappa: float = 1.0
    ig_a: float = 1.0
    ig_b: float = 1.0
    kappa: float = 2.0

    # criteria
    criterion: str = "switch"
    criteria: tuple = ("switch", "bayes")
    gamma: float = 1.0
    aic_t: float = 1.0
    hq_c: float = 1.0
    alpha: float = 0.05

    # estimation and loss
    estimator: str = "mle"
    map_lambda: float = 1.0
    loss: str = "squared_error"

    # grids
    n_grid: tuple = (32, 128, 512, 2048, 4096)
    mu_grid: tuple = ()
    shell_points: int = 33
    shell_width: float = 10.0
    far_points: int = 5
    alphas: tuple = (0.01, 0.05, 0.1)
    horizon: int = 10000
    horizons: tuple = (100, 1000, 10000)
    peek: int = 1
    n_min: int = 3
    s_grid: tuple = (0.0, 1.0, 2.0, 4.0, 6.0, 8.0, 12.0)
    scales: tuple = ("loglog", "log")
    alt_offset: float = 1.0
    quadrature_prior_scale: float = 1.0  # != 1 deliberately breaks the prior normalisation in diag

    def __post_init__(self):
        try:
            self._validate()
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    def _validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.family in FAMILIES, f"unknown family {self.family!r}; expected one of {sorted(FAMILIES)}")
        need(self.reps >= 1, "reps must be at least 1")
        need(self.workers >= 1 and self.chunk >= 1, "workers and chunk must be positive")
        need(self.sigma > 0, "sigma must be positive")
        need(self.criterion in KINDS, f"unknown criterion {self.criterion!r}; expected one of {KINDS}")
        for c in self.criteria:
            need(c in KINDS + ORACLE_CRITERIA,
                 f"unknown criterion {c!r}; expected one of {KINDS + ORACLE_CRITERIA}")
        need(self.estimator in ESTIMATORS, f"unknown estimator {self.estimator!r}; expected one of {ESTIMATORS}")
        need(self.loss in {k.value for k in LossKind}, f"unknown loss {self.loss!r}")
        need(self.map_lambda > 0, "map_lambda must be positive")
        need(self.gamma > 0 and self.aic_t > 0 and self.hq_c > 0, "gamma, aic_t and hq_c must be positive")
        need(0 <= self.alpha <= 1 and all(0 <= a <= 1 for a in self.alphas), "alphas must lie in [0, 1]")
        need(all(n >= 1 for n in self.n_grid) and list(self.n_grid) == sorted(self.n_grid) and self.n_grid,
             "n_grid must be a nonempty ascending list of positive counts")
        need(self.horizon >= 1 and all(1 <= h for h in self.horizons), "horizons must be positive")
        need(list(self.horizons) == sorted(self.horizons), "horizons must be ascending")
        need(self.peek >= 1 and self.n_min >= 1, "peek and n_min must be positive")
        need(self.shell_points >= 1 and self.far_points >= 0 and self.shell_width > 0, "invalid shell grid")
        need(all(s >= 0 for s in self.s_grid), "s_grid must be nonnegative")
        need(all(s in ("loglog", "log") for s in self.scales), "scales must be 'loglog' or 'log'")
        need(self.kappa >= 2, "kappa must be at least 2")
        need(self.quadrature_prior_scale > 0, "quadrature_prior_scale must be positive")
        self.pair()  # validates null_tail and m0 against the family
        self.model()

    # ------------------------------------------------------------------ builders

    def family_spec(self):
        return _family(self.family, self.sigma)

    def resolved_m0(self) -> int:
        if self.m0 >= 0:
            return self.m0
        return self.family_spec().dim - 1

    def pair(self) -> NestedPair:
        return _pair(self.family, self.sigma, self.resolved_m0(), self.null_tail or _DEFAULT_NULL[self.family])

    def model(self) -> NestedModel:
        return _model(self)

    def criterion_obj(self, kind: str | None = None) -> Criterion:
        kind = kind or self.criterion
        return Criterion(kind, gamma=self.gamma, t=self.aic_t, c=self.hq_c)

    def resolved(self) -> dict:
        """All fields with defaults materialised, as plain JSON-ready values."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        out["m0"] = self.resolved_m0()
        out["null_tail"] = list(self.pair().fixed_tail)
        return out

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


@lru_cache(maxsize=None)
def _family(name: str, sigma: float):
    return get_family(name, sigma=sigma) if name == "gaussian" else get_family(name)


@lru_cache(maxsize=None)
def _pair(name: str, sigma: float, m0: int, tail: tuple) -> NestedPair:
    return NestedPair(_family(name, sigma), m0, tuple(tail))


@lru_cache(maxsize=None)
def _model(cfg: SimConfig) -> NestedModel:
    pair = cfg.pair()
    fam = pair.family
    if fam.name == "gaussian_mv":
        if pair.m0 != 1:
            raise ConfigError("the mean-variance pair supports m0 = 1 (mean pinned) only")
        prior0 = InverseGammaPrior(fam, cfg.ig_a, cfg.ig_b, mean=pair.fixed_tail[0])
        prior1 = NormalInverseGammaPrior(fam, cfg.prior_mean, cfg.nig_kappa, cfg.ig_a, cfg.ig_b)
    else:
        if not pair.is_singleton:
            raise ConfigError("one-dimensional families need a singleton null (m0 = 0)")
        prior0 = PointMass(fam, pair.null_point)
        if fam.name == "gaussian":
            prior1 = NormalPrior(fam, cfg.prior_mean, cfg.prior_var)
        elif fam.name == "bernoulli":
            prior1 = BetaPrior(fam, cfg.beta_a, cfg.beta_b)
        else:
            prior1 = GammaPrior(fam, cfg.gamma_shape, cfg.gamma_rate)
    return NestedModel(pair, prior0, prior1, SwitchPrior(cfg.kappa))


def _coerce(name: str, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{name}: must be finite")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{name}: expected a list, got {value!r}")
        if default and isinstance(default[0], int) and not isinstance(default[0], bool):
            return tuple(_coerce(name, v, 0) for v in value)
        if default and isinstance(default[0], str):
            return tuple(_coerce(name, v, "") for v in value)
        return tuple(_coerce(name, v, 0.0) for v in value)
    raise ConfigError(f"{name}: unsupported value {value!r}")


def from_mapping(data: dict, **overrides) -> SimConfig:
    known = {f.name: f.default for f in fields(SimConfig)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {k: _coerce(k, v, known[k]) for k, v in data.items()}
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return SimConfig(**kwargs)


def load(path=None, **overrides) -> SimConfig:
    """Read a TOML config (or defaults when ``path`` is None) and apply overrides."""
    if path is None:
        return from_mapping({}, **overrides)
    try:
        with open(Path(path), "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return from_mapping(data, **overrides)
