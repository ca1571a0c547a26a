"""Numerical self-checks run by ``switchsel diag``.

Each check returns a :class:`Check` with the measured number and the bound
it was held to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from switchsel.config import SimConfig
from switchsel.evidence import (MarginalState, NumericDensity, laplace_diagnostic, laplace_target, log_marginal,
                                quadrature_log_marginal)
from switchsel.expfam import FamilySpec, LossKind, grid_points, loss_values, mle


@dataclass(frozen=True)
class Check:
    name: str
    status: str  # PASS, FAIL or SKIP
    value: float
    bound: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status != "FAIL"

    def line(self) -> str:
        text = f"{self.status} {self.name}: value={self.value:.6g} bound={self.bound:.3g}"
        return f"{text} ({self.detail})" if self.detail else text


_TRUTH = {"gaussian": (0.5,), "bernoulli": (0.3,), "poisson": (2.0,), "gaussian_mv": (1.25, 0.5)}


def draw(family: FamilySpec, mu, n: int, rng: np.random.Generator) -> np.ndarray:
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if family.name == "gaussian":
        return rng.normal(mu[0], family.params["sigma"], n)
    if family.name == "bernoulli":
        return (rng.random(n) < mu[0]).astype(float)
    if family.name == "poisson":
        return rng.poisson(mu[0], n).astype(float)
    mean, var = mu[1], mu[0] - mu[1] ** 2
    return rng.normal(mean, math.sqrt(var), n)


def laplace_trend(cfg: SimConfig, sizes=(100, 1000, 10000), tol: float = 0.05) -> Check:
    """The Laplace remainder approaches its limit as ``n`` grows."""
    model = cfg.model()
    fam = model.pair.family
    x = draw(fam, _TRUTH[fam.name], max(sizes), np.random.default_rng(cfg.seed))
    state, devs, done = MarginalState(model.prior1), [], 0
    for n in sizes:
        for v in x[done:n]:
            state = state.update(v)
        done = n
        mu_hat = mle(x[:n], fam).values
        devs.append(laplace_diagnostic(state, fam, x[:n]) - laplace_target(model.prior1, mu_hat))
    last, first = abs(devs[-1]), abs(devs[0])
    ok = last < tol and last <= first + tol / 5
    return Check("laplace", "PASS" if ok else "FAIL", last, tol,
                 "deviations " + ", ".join(f"n={n}: {d:.3g}" for n, d in zip(sizes, devs)))


def bhattacharyya(family: FamilySpec, mu_a, mu_b) -> float:
    """``sum_x sqrt(p_a(x) p_b(x))`` by direct summation or adaptive quadrature over observations."""
    def half(x):
        return np.exp(0.5 * (family.log_density(x, mu_a) + family.log_density(x, mu_b)))

    if family.name == "bernoulli":
        return float(half(np.array([0.0, 1.0])).sum())
    if family.name == "poisson":
        top = int(max(mu_a[0], mu_b[0]) * 4 + 60)
        return float(half(np.arange(top, dtype=float)).sum())
    value, _ = integrate.quad(lambda t: float(half(np.array([t]))[0]), -np.inf, np.inf,
                              epsabs=1e-15, epsrel=1e-13, limit=200)
    return value


def loss_identity(cfg: SimConfig, tol: float = 1e-12) -> Check:
    """Hellinger from the Renyi divergence against Hellinger from an independent overlap integral."""
    fam = cfg.pair().family
    pts = grid_points(fam, 17 if fam.dim == 1 else 4)
    worst = 0.0
    for a in pts:
        renyi = loss_values(LossKind.RENYI, a[None, :], pts, fam)
        for b, r in zip(pts, renyi):
            direct = 2.0 * (1.0 - bhattacharyya(fam, a, b))
            worst = max(worst, abs(direct - 2.0 * (1.0 - math.exp(-r / 2.0))))
    return Check("hellinger_identity", "PASS" if worst < tol else "FAIL", worst, tol, f"{len(pts) ** 2} pairs")


def loss_sandwich(cfg: SimConfig, tol: float = 1e-10) -> Check:
    """Squared Hellinger <= Renyi <= KL on every grid pair."""
    fam = cfg.pair().family
    pts = grid_points(fam, 17)
    a = np.repeat(pts, len(pts), axis=0)
    b = np.tile(pts, (len(pts), 1))
    h2 = loss_values(LossKind.SQUARED_HELLINGER, a, b, fam)
    r = loss_values(LossKind.RENYI, a, b, fam)
    kl = loss_values(LossKind.KL, a, b, fam)
    violation = float(max(np.max(h2 - r), np.max(r - kl), 0.0))
    return Check("loss_sandwich", "PASS" if violation <= tol else "FAIL", violation, tol, f"{len(a)} pairs")


def _numeric_twin(cfg: SimConfig) -> NumericDensity | None:
    """The complex-model prior as a numeric density, scaled by ``quadrature_prior_scale``."""
    model = cfg.model()
    fam, prior = model.pair.family, model.prior1
    shift = math.log(cfg.quadrature_prior_scale)
    if fam.name == "gaussian":
        sd = math.sqrt(prior.var)
        lo, hi = prior.mean - 14 * sd, prior.mean + 14 * sd
        pdf = lambda m: stats.norm.logpdf(m, prior.mean, sd) + shift
    elif fam.name == "bernoulli":
        lo, hi = 0.0, 1.0
        pdf = lambda m: stats.beta.logpdf(m, prior.a, prior.b) + shift
    elif fam.name == "poisson":
        lo, hi = 0.0, float(stats.gamma.ppf(1 - 1e-14, prior.shape, scale=1.0 / prior.rate)) + 30.0
        pdf = lambda m: stats.gamma.logpdf(m, prior.shape, scale=1.0 / prior.rate) + shift
    else:
        return None
    return NumericDensity(fam, pdf, lo, hi)


def quadrature_agreement(cfg: SimConfig, n: int = 50, tol: float = 1e-6) -> Check:
    twin = _numeric_twin(cfg)
    if twin is None:
        return Check("quadrature", "SKIP", 0.0, tol, "quadrature covers one-dimensional families")
    fam = twin.family
    x = draw(fam, _TRUTH[fam.name], n, np.random.default_rng(cfg.seed + 1))
    gap = abs(quadrature_log_marginal(fam, twin, x, tol=tol / 10) - log_marginal(cfg.model().prior1, x))
    return Check("quadrature", "PASS" if gap < tol else "FAIL", gap, tol, f"n={n}")


def run_all(cfg: SimConfig) -> list[Check]:
    return [laplace_trend(cfg), loss_identity(cfg), loss_sandwich(cfg), quadrature_agreement(cfg)]
