"""Exponential families in mean-value parameterization.

A family is described by its sufficient statistic ``phi``, log carrier
``log r``, log partition ``psi`` and the maps between natural parameters
``theta`` and mean parameters ``mu = E[phi(X)]``.  All parameter-level
callables are vectorised over leading axes: a mean parameter batch has shape
``(..., dim)``.

Four families are built in:

* ``gaussian_location(sigma)`` -- N(mu, sigma^2), sigma known.
* ``bernoulli()``
* ``poisson()``
* ``gaussian_mean_variance()`` -- N(m, s^2) with statistic ``(x^2, x)`` so
  ``mu = (m^2 + s^2, m)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import gammaln, xlogy

from switchsel.errors import EmptySample, InvalidObservation, NonFiniteLoss, UndefinedMLE

Interval = tuple[float, float]


@dataclass(frozen=True)
class FamilySpec:
    name: str
    dim: int
    suff_stat: Callable[[np.ndarray], np.ndarray]
    log_carrier: Callable[[np.ndarray], np.ndarray]
    log_partition: Callable[[np.ndarray], np.ndarray]
    mean_map: Callable[[np.ndarray], np.ndarray]
    nat_map: Callable[[np.ndarray], np.ndarray]
    fisher_info: Callable[[np.ndarray], np.ndarray]
    mean_space: tuple[Interval, ...]
    in_support: Callable[[np.ndarray], np.ndarray]
    discrete: bool = False
    # carrier-free log likelihood from (n, sum of phi); overrides handle mu on the closure
    log_lik_stats_fn: Optional[Callable] = None
    # extra validity condition for mean spaces that are not exact boxes
    constraint: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: dict = field(default_factory=dict)

    def contains(self, mu) -> bool:
        """True iff ``mu`` is strictly inside the mean space."""
        mu = np.asarray(mu, dtype=float).reshape(-1)
        if mu.shape != (self.dim,) or not np.all(np.isfinite(mu)):
            return False
        return bool(self.contains_batch(mu[None, :])[0])

    def contains_batch(self, mu):
        mu = np.asarray(mu, dtype=float)
        ok = np.ones(mu.shape[:-1], dtype=bool)
        for j, (lo, hi) in enumerate(self.mean_space):
            ok &= (mu[..., j] > lo) & (mu[..., j] < hi)
        if self.constraint is not None:
            with np.errstate(invalid="ignore"):
                ok &= self.constraint(mu)
        return ok

    def check_sample(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size and not np.all(self.in_support(x)):
            bad = x[~self.in_support(x)][0]
            raise InvalidObservation(f"{bad!r} is outside the support of the {self.name} family")
        return x

    def log_lik_stats(self, mu, n, T):
        """``log p_mu(x^n) - sum log r(x_i)`` given ``n`` and ``T = sum phi(x_i)``."""
        if self.log_lik_stats_fn is not None:
            return self.log_lik_stats_fn(mu, n, T)
        theta = self.nat_map(mu)
        return np.sum(theta * T, axis=-1) - n * self.log_partition(theta)

    def log_density(self, x, mu):
        """Per-observation log density ``log p_mu(x_i)``."""
        x = np.asarray(x, dtype=float).reshape(-1)
        mu = np.asarray(mu, dtype=float)
        phi = self.suff_stat(x)
        return self.log_lik_stats(mu, 1, phi) + self.log_carrier(x)

    def log_likelihood(self, x, mu) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        T = self.suff_stat(x).sum(axis=0)
        return float(self.log_lik_stats(np.asarray(mu, dtype=float), x.size, T)
                     + self.log_carrier(x).sum())


# --------------------------------------------------------------------------- built-ins

def gaussian_location(sigma: float = 1.0) -> FamilySpec:
    s2 = float(sigma) ** 2

    def log_lik_stats(mu, n, T):
        mu = np.asarray(mu, dtype=float)[..., 0]
        return (mu * np.asarray(T)[..., 0] - n * mu * mu / 2.0) / s2

    return FamilySpec(
        name="gaussian",
        dim=1,
        suff_stat=lambda x: np.asarray(x, dtype=float).reshape(-1, 1),
        log_carrier=lambda x: -np.asarray(x, dtype=float) ** 2 / (2 * s2) - 0.5 * math.log(2 * math.pi * s2),
        log_partition=lambda th: s2 * np.asarray(th)[..., 0] ** 2 / 2.0,
        mean_map=lambda th: s2 * np.asarray(th, dtype=float),
        nat_map=lambda mu: np.asarray(mu, dtype=float) / s2,
        fisher_info=lambda mu: np.array([[1.0 / s2]]),
        mean_space=((-math.inf, math.inf),),
        in_support=lambda x: np.isfinite(x),
        log_lik_stats_fn=log_lik_stats,
        params={"sigma": float(sigma)},
    )


def bernoulli() -> FamilySpec:
    def log_lik_stats(mu, n, T):
        mu = np.asarray(mu, dtype=float)[..., 0]
        T = np.asarray(T, dtype=float)[..., 0]
        return xlogy(T, mu) + xlogy(n - T, 1.0 - mu)

    def fisher(mu):
        m = float(np.asarray(mu).reshape(-1)[0])
        return np.array([[1.0 / (m * (1.0 - m))]])

    return FamilySpec(
        name="bernoulli",
        dim=1,
        suff_stat=lambda x: np.asarray(x, dtype=float).reshape(-1, 1),
        log_carrier=lambda x: np.zeros(np.shape(x)),
        log_partition=lambda th: np.logaddexp(0.0, np.asarray(th)[..., 0]),
        mean_map=lambda th: 1.0 / (1.0 + np.exp(-np.asarray(th, dtype=float))),
        nat_map=lambda mu: np.log(mu) - np.log1p(-np.asarray(mu, dtype=float)),
        fisher_info=fisher,
        mean_space=((0.0, 1.0),),
        in_support=lambda x: (x == 0) | (x == 1),
        discrete=True,
        log_lik_stats_fn=log_lik_stats,
    )


def poisson() -> FamilySpec:
    def log_lik_stats(mu, n, T):
        mu = np.asarray(mu, dtype=float)[..., 0]
        return xlogy(np.asarray(T, dtype=float)[..., 0], mu) - n * mu

    return FamilySpec(
        name="poisson",
        dim=1,
        suff_stat=lambda x: np.asarray(x, dtype=float).reshape(-1, 1),
        log_carrier=lambda x: -gammaln(np.asarray(x, dtype=float) + 1.0),
        log_partition=lambda th: np.exp(np.asarray(th)[..., 0]),
        mean_map=lambda th: np.exp(np.asarray(th, dtype=float)),
        nat_map=lambda mu: np.log(np.asarray(mu, dtype=float)),
        fisher_info=lambda mu: np.array([[1.0 / float(np.asarray(mu).reshape(-1)[0])]]),
        mean_space=((0.0, math.inf),),
        in_support=lambda x: (x >= 0) & (np.floor(x) == x) & np.isfinite(x),
        discrete=True,
        log_lik_stats_fn=log_lik_stats,
    )


def gaussian_mean_variance() -> FamilySpec:
    """N(m, s^2) with ``phi(x) = (x^2, x)``; mean space ``mu_1 > mu_2^2``."""

    def nat_map(mu):
        mu = np.asarray(mu, dtype=float)
        s2 = mu[..., 0] - mu[..., 1] ** 2
        return np.stack([-0.5 / s2, mu[..., 1] / s2], axis=-1)

    def mean_map(th):
        th = np.asarray(th, dtype=float)
        s2 = -0.5 / th[..., 0]
        m = th[..., 1] * s2
        return np.stack([m * m + s2, m], axis=-1)

    def log_partition(th):
        th = np.asarray(th, dtype=float)
        return -th[..., 1] ** 2 / (4.0 * th[..., 0]) + 0.5 * np.log(math.pi / -th[..., 0])

    def fisher(mu):
        mu = np.asarray(mu, dtype=float).reshape(-1)
        m = mu[1]
        s2 = mu[0] - m * m
        scale = 1.0 / (2.0 * s2 ** 3)
        return scale * np.array([[s2, -2.0 * m * s2],
                                 [-2.0 * m * s2, 2.0 * s2 * s2 + 4.0 * m * m * s2]])

    def suff(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return np.stack([x * x, x], axis=-1)

    return FamilySpec(
        name="gaussian_mv",
        dim=2,
        suff_stat=suff,
        log_carrier=lambda x: np.zeros(np.shape(x)),
        log_partition=log_partition,
        mean_map=mean_map,
        nat_map=nat_map,
        fisher_info=fisher,
        mean_space=((0.0, math.inf), (-math.inf, math.inf)),
        in_support=lambda x: np.isfinite(x),
        constraint=lambda mu: mu[..., 0] > mu[..., 1] ** 2,
    )


FAMILIES = {
    "gaussian": gaussian_location,
    "bernoulli": bernoulli,
    "poisson": poisson,
    "gaussian_mv": gaussian_mean_variance,
}


def get_family(name: str, **kwargs) -> FamilySpec:
    try:
        factory = FAMILIES[name]
    except KeyError:
        raise KeyError(f"unknown family {name!r}; expected one of {sorted(FAMILIES)}") from None
    return factory(**kwargs)


# --------------------------------------------------------------------------- parameters

@dataclass(frozen=True)
class MeanParam:
    values: np.ndarray
    inside: bool

    @classmethod
    def of(cls, family: FamilySpec, values) -> "MeanParam":
        v = np.asarray(values, dtype=float).reshape(-1).copy()
        v.setflags(write=False)
        return cls(v, family.contains(v))

    def __eq__(self, other):
        if not isinstance(other, MeanParam):
            return NotImplemented
        return self.inside == other.inside and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.values.tobytes(), self.inside))


@dataclass(frozen=True)
class NestedPair:
    """Complex model ``family`` and the submodel pinning its last ``dim - m0`` coordinates."""

    family: FamilySpec
    m0: int
    fixed_tail: tuple[float, ...]

    def __post_init__(self):
        m1 = self.family.dim
        if not 0 <= self.m0 < m1:
            raise ValueError(f"need 0 <= m0 < m1 = {m1}, got m0 = {self.m0}")
        tail = tuple(float(v) for v in self.fixed_tail)
        if len(tail) != m1 - self.m0:
            raise ValueError(f"fixed_tail must have {m1 - self.m0} entries, got {len(tail)}")
        object.__setattr__(self, "fixed_tail", tail)
        for j, v in enumerate(tail, start=self.m0):
            lo, hi = self.family.mean_space[j]
            if not lo < v < hi:
                raise ValueError(f"pinned value {v} not inside ({lo}, {hi})")
        if self.m0 == 0 and not self.family.contains(tail):
            raise ValueError(f"singleton null {tail} is not inside the mean space")

    @property
    def m1(self) -> int:
        return self.family.dim

    @property
    def is_singleton(self) -> bool:
        return self.m0 == 0

    @property
    def null_point(self) -> np.ndarray:
        if not self.is_singleton:
            raise ValueError("null model is composite")
        return np.array(self.fixed_tail)

    def project(self, values):
        """Vectorised projection of ``(..., m1)`` mean vectors onto the null model."""
        out = np.array(values, dtype=float, copy=True)
        out[..., self.m0:] = self.fixed_tail
        return out

    def contains0(self, mu) -> bool:
        mu = np.asarray(mu, dtype=float).reshape(-1)
        return self.family.contains(mu) and np.array_equal(mu[self.m0:], self.fixed_tail)


# --------------------------------------------------------------------------- estimators

def suff_mean(sample, family: FamilySpec) -> np.ndarray:
    x = family.check_sample(sample)
    if x.size == 0:
        raise EmptySample("sample is empty")
    return family.suff_stat(x).mean(axis=0)


def mle(sample, family: FamilySpec) -> MeanParam:
    """Maximum likelihood estimate; defined only when the mean statistic is interior."""
    mu = suff_mean(sample, family)
    if not family.contains(mu):
        raise UndefinedMLE(f"average statistic {mu.tolist()} is not inside the {family.name} mean space")
    return MeanParam.of(family, mu)


def project0(mu1: MeanParam, pair: NestedPair) -> MeanParam:
    return MeanParam.of(pair.family, pair.project(mu1.values))


def map_estimate(sample, family: FamilySpec, lambda0: float, mu_anchor) -> MeanParam:
    """Conjugate-prior MAP: ``(sum phi(x_i) + lambda0 * anchor) / (n + lambda0)``.

    The empty sample returns the anchor itself.
    """
    if lambda0 <= 0:
        raise ValueError("lambda0 must be positive")
    anchor = np.asarray(getattr(mu_anchor, "values", mu_anchor), dtype=float).reshape(-1)
    if not family.contains(anchor):
        raise ValueError(f"anchor {anchor.tolist()} must lie inside the mean space")
    x = family.check_sample(sample)
    total = family.suff_stat(x).sum(axis=0) if x.size else np.zeros(family.dim)
    return MeanParam.of(family, (total + lambda0 * anchor) / (x.size + lambda0))


def default_box_schedule(family: FamilySpec) -> Callable[[int], tuple[np.ndarray, np.ndarray]]:
    """Boxes ``[a + w/(n+1), b - w/(n+1)]`` per bounded end; unbounded ends stay open."""
    lows, highs = zip(*family.mean_space)
    lows, highs = np.array(lows), np.array(highs)

    def schedule(n: int):
        lo, hi = lows.copy(), highs.copy()
        for j in range(family.dim):
            a, b = lows[j], highs[j]
            width = (b - a) if np.isfinite(a) and np.isfinite(b) else 1.0
            gap = width / (n + 1)
            if np.isfinite(a):
                lo[j] = a + gap
            if np.isfinite(b):
                hi[j] = b - gap
        return lo, hi

    return schedule


def truncated_mle(sample, family: FamilySpec, box_schedule=None) -> MeanParam:
    x = family.check_sample(sample)
    mu = suff_mean(x, family)
    lo, hi = (box_schedule or default_box_schedule(family))(x.size)
    return MeanParam.of(family, np.clip(mu, lo, hi))


# --------------------------------------------------------------------------- losses

class LossKind(enum.Enum):
    SQUARED_ERROR = "squared_error"
    STANDARDIZED_SQUARED = "standardized_squared"
    RENYI = "renyi"
    SQUARED_HELLINGER = "squared_hellinger"
    KL = "kl"


def _vals(mu):
    return np.asarray(getattr(mu, "values", mu), dtype=float)


def renyi_half(family: FamilySpec, mu_ref, mu_est):
    """Order-1/2 Renyi divergence, vectorised over leading axes."""
    ta, tb = family.nat_map(mu_ref), family.nat_map(mu_est)
    psi = family.log_partition
    return -2.0 * (psi((ta + tb) / 2.0) - 0.5 * (psi(ta) + psi(tb)))


def kl_divergence(family: FamilySpec, mu_ref, mu_est):
    ta, tb = family.nat_map(mu_ref), family.nat_map(mu_est)
    return (np.sum((ta - tb) * np.asarray(mu_ref, dtype=float), axis=-1)
            - family.log_partition(ta) + family.log_partition(tb))


def hellinger_from_renyi(d_renyi):
    return 2.0 * (1.0 - np.exp(-np.asarray(d_renyi) / 2.0))


def loss_values(kind: LossKind, mu_ref, mu_est, family: FamilySpec):
    """``L(mu_ref, mu_est)`` for batches of shape ``(..., dim)``; may contain ``inf``."""
    kind = LossKind(kind)
    a, b = _vals(mu_ref), _vals(mu_est)
    if kind is LossKind.SQUARED_ERROR:
        return np.sum((a - b) ** 2, axis=-1)
    if kind is LossKind.STANDARDIZED_SQUARED:
        diff = b - a
        if a.ndim == 1:
            return float(diff @ family.fisher_info(a) @ diff)
        info = np.stack([family.fisher_info(row) for row in a.reshape(-1, family.dim)])
        d = diff.reshape(-1, family.dim)
        return np.einsum("ki,kij,kj->k", d, info, d).reshape(a.shape[:-1])
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if kind is LossKind.KL:
            out = kl_divergence(family, a, b)
        else:
            out = renyi_half(family, a, b)
            if kind is LossKind.SQUARED_HELLINGER:
                out = hellinger_from_renyi(out)
    ok = family.contains_batch(np.broadcast_to(a, np.broadcast_shapes(a.shape, b.shape))) \
        & family.contains_batch(np.broadcast_to(b, np.broadcast_shapes(a.shape, b.shape)))
    return np.where(ok & np.isfinite(out), out, np.inf)


def loss(kind: LossKind, mu_ref, mu_est, family: FamilySpec) -> float:
    value = float(loss_values(kind, mu_ref, mu_est, family))
    if not math.isfinite(value):
        raise NonFiniteLoss(f"{LossKind(kind).value} loss is infinite for {_vals(mu_ref)} vs {_vals(mu_est)}")
    return max(value, 0.0)


# --------------------------------------------------------------------------- test grids

def interior_box(family: FamilySpec, fraction: float = 0.6,
                 defaults: Sequence[Interval] = ((-3.0, 3.0), (0.1, 10.0))) -> tuple[np.ndarray, np.ndarray]:
    """A compact box strictly inside the mean space.

    Bounded intervals keep their central ``fraction``; ``(-inf, inf)`` maps to
    ``defaults[0]`` and half-lines to ``defaults[1]`` shifted onto the finite end.
    """
    lo, hi = [], []
    for a, b in family.mean_space:
        if math.isfinite(a) and math.isfinite(b):
            pad = (1.0 - fraction) / 2.0 * (b - a)
            lo.append(a + pad)
            hi.append(b - pad)
        elif not math.isfinite(a) and not math.isfinite(b):
            lo.append(defaults[0][0])
            hi.append(defaults[0][1])
        elif math.isfinite(a):
            lo.append(a + defaults[1][0])
            hi.append(a + defaults[1][1])
        else:
            lo.append(b - defaults[1][1])
            hi.append(b - defaults[1][0])
    return np.array(lo), np.array(hi)


def grid_points(family: FamilySpec, points: int = 17, box=None) -> np.ndarray:
    """Equispaced tensor grid over ``box`` keeping only points inside the family."""
    lo, hi = box if box is not None else interior_box(family)
    axes = [np.linspace(lo[j], hi[j], points) for j in range(family.dim)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, family.dim)
    return mesh[family.contains_batch(mesh)]
