"""Sequential Bayes marginal likelihoods.

A prior knows how to turn the running sufficient statistics ``(n, T = sum
phi(x_i))`` into the carrier-free log marginal ``log p_B(x^n) - sum log
r(x_i)``.  :class:`MarginalState` accumulates the exact log marginal one
predictive increment at a time, which is the form the switch distribution
consumes.  Everything stays in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import stats
from scipy.special import betaln, gammaln, logsumexp

from switchsel.errors import GridTooCoarse, InvalidObservation, NumericUnderflow
from switchsel.expfam import FamilySpec, mle

LOG_2PI = math.log(2.0 * math.pi)


class Prior:
    """Base class.  Subclasses set ``family``/``model_dim`` and implement the hooks."""

    family: FamilySpec
    model_dim: int

    def log_marginal_cf(self, n, T):
        """Carrier-free log marginal, vectorised: ``n`` shape ``S``, ``T`` shape ``S + (dim,)``."""
        raise NotImplementedError

    def log_predictive_cf(self, n, T, phi):
        """Carrier-free log predictive of one observation with statistic ``phi``."""
        return float(self.log_marginal_cf(n + 1, T + phi) - self.log_marginal_cf(n, T))

    def log_density(self, mu) -> float:
        """``log omega(mu)`` on the model's own coordinates (mean-value parameterization)."""
        raise NotImplementedError

    def posterior(self, n, T) -> dict:
        return {"n": int(n), "T": np.asarray(T).tolist()}


class PointMass(Prior):
    """Degenerate prior for a singleton null model: ``p_B0 = p_mu0``."""

    model_dim = 0

    def __init__(self, family: FamilySpec, mu0):
        self.family = family
        self.mu0 = np.asarray(mu0, dtype=float).reshape(-1)
        if not family.contains(self.mu0):
            raise ValueError(f"point mass {self.mu0.tolist()} outside the mean space")

    def log_marginal_cf(self, n, T):
        return self.family.log_lik_stats(self.mu0, n, T)

    def log_predictive_cf(self, n, T, phi):
        return float(self.family.log_lik_stats(self.mu0, 1, phi))

    def __repr__(self):
        return f"PointMass({self.mu0.tolist()})"


class NormalPrior(Prior):
    """N(mean, var) on the mean of the Gaussian location family."""

    model_dim = 1

    def __init__(self, family: FamilySpec, mean: float = 0.0, var: float = 1.0):
        if family.name != "gaussian":
            raise ValueError("NormalPrior requires the gaussian location family")
        if var <= 0:
            raise ValueError("prior variance must be positive")
        self.family, self.mean, self.var = family, float(mean), float(var)
        self.s2 = family.params["sigma"] ** 2

    def _post(self, n, T):
        prec = 1.0 / self.var + n / self.s2
        b = self.mean / self.var + np.asarray(T, dtype=float)[..., 0] / self.s2
        return prec, b

    def log_marginal_cf(self, n, T):
        prec, b = self._post(n, T)
        return -0.5 * np.log(self.var * prec) + b * b / (2.0 * prec) - self.mean ** 2 / (2.0 * self.var)

    def log_predictive_cf(self, n, T, phi):
        prec, b = self._post(n, T)
        m_n, v_n = b / prec, 1.0 / prec
        x = float(phi[0])
        pred_var = self.s2 + v_n
        full = -0.5 * (LOG_2PI + math.log(pred_var)) - (x - m_n) ** 2 / (2.0 * pred_var)
        return float(full - float(self.family.log_carrier(np.array([x]))[0]))

    def log_density(self, mu):
        return float(stats.norm.logpdf(np.asarray(mu).reshape(-1)[0], self.mean, math.sqrt(self.var)))

    def posterior(self, n, T):
        prec, b = self._post(n, T)
        return {"mean": float(b / prec), "var": float(1.0 / prec)}

    def __repr__(self):
        return f"NormalPrior(mean={self.mean}, var={self.var})"


class BetaPrior(Prior):
    model_dim = 1

    def __init__(self, family: FamilySpec, a: float = 1.0, b: float = 1.0):
        if family.name != "bernoulli":
            raise ValueError("BetaPrior requires the bernoulli family")
        if a <= 0 or b <= 0:
            raise ValueError("beta hyperparameters must be positive")
        self.family, self.a, self.b = family, float(a), float(b)

    def log_marginal_cf(self, n, T):
        k = np.asarray(T, dtype=float)[..., 0]
        return betaln(self.a + k, self.b + n - k) - betaln(self.a, self.b)

    def log_predictive_cf(self, n, T, phi):
        k = float(np.asarray(T)[0])
        num = self.a + k if phi[0] == 1 else self.b + n - k
        return math.log(num / (self.a + self.b + n))

    def log_density(self, mu):
        return float(stats.beta.logpdf(np.asarray(mu).reshape(-1)[0], self.a, self.b))

    def posterior(self, n, T):
        k = float(np.asarray(T)[0])
        return {"a": self.a + k, "b": self.b + n - k}

    def __repr__(self):
        return f"BetaPrior(a={self.a}, b={self.b})"


class GammaPrior(Prior):
    model_dim = 1

    def __init__(self, family: FamilySpec, shape: float = 1.0, rate: float = 1.0):
        if family.name != "poisson":
            raise ValueError("GammaPrior requires the poisson family")
        if shape <= 0 or rate <= 0:
            raise ValueError("gamma hyperparameters must be positive")
        self.family, self.shape, self.rate = family, float(shape), float(rate)

    def log_marginal_cf(self, n, T):
        s = np.asarray(T, dtype=float)[..., 0]
        a, b = self.shape, self.rate
        return a * math.log(b) - gammaln(a) + gammaln(a + s) - (a + s) * np.log(b + n)

    def log_predictive_cf(self, n, T, phi):
        s, x = float(np.asarray(T)[0]), float(phi[0])
        a, b = self.shape + s, self.rate + n
        # negative binomial pmf without the 1/x! carrier
        return float(gammaln(a + x) - gammaln(a) + a * math.log(b / (b + 1.0)) - x * math.log(b + 1.0))

    def log_density(self, mu):
        return float(stats.gamma.logpdf(np.asarray(mu).reshape(-1)[0], self.shape, scale=1.0 / self.rate))

    def posterior(self, n, T):
        return {"shape": self.shape + float(np.asarray(T)[0]), "rate": self.rate + n}

    def __repr__(self):
        return f"GammaPrior(shape={self.shape}, rate={self.rate})"


class NormalInverseGammaPrior(Prior):
    """NIG(m, kappa, a, b) on (mean, variance) of the Gaussian mean-variance family.

    The map ``(m, s^2) -> (m^2 + s^2, m)`` has unit Jacobian, so the density in
    mean-value coordinates is the NIG density evaluated at the preimage.
    """

    model_dim = 2

    def __init__(self, family: FamilySpec, m: float = 0.0, kappa: float = 1.0, a: float = 1.0, b: float = 1.0):
        if family.name != "gaussian_mv":
            raise ValueError("NormalInverseGammaPrior requires the gaussian_mv family")
        if min(kappa, a, b) <= 0:
            raise ValueError("NIG hyperparameters kappa, a, b must be positive")
        self.family = family
        self.m, self.kappa, self.a, self.b = float(m), float(kappa), float(a), float(b)

    def _post(self, n, T):
        T = np.asarray(T, dtype=float)
        s2, s1 = T[..., 0], T[..., 1]
        kn = self.kappa + n
        mn = (self.kappa * self.m + s1) / kn
        an = self.a + n / 2.0
        bn = self.b + 0.5 * (s2 + self.kappa * self.m ** 2 - kn * mn * mn)
        return kn, mn, an, bn

    def log_marginal_cf(self, n, T):
        kn, _, an, bn = self._post(n, T)
        return (gammaln(an) - gammaln(self.a) + self.a * math.log(self.b) - an * np.log(bn)
                + 0.5 * np.log(self.kappa / kn) - 0.5 * n * LOG_2PI)

    def log_density(self, mu):
        mu = np.asarray(mu, dtype=float).reshape(-1)
        mean, var = mu[1], mu[0] - mu[1] ** 2
        if var <= 0:
            return -math.inf
        return float(stats.invgamma.logpdf(var, self.a, scale=self.b)
                     + stats.norm.logpdf(mean, self.m, math.sqrt(var / self.kappa)))

    def posterior(self, n, T):
        kn, mn, an, bn = self._post(n, T)
        return {"m": float(mn), "kappa": float(kn), "a": float(an), "b": float(bn)}

    def __repr__(self):
        return f"NormalInverseGammaPrior(m={self.m}, kappa={self.kappa}, a={self.a}, b={self.b})"


class InverseGammaPrior(Prior):
    """IG(a, b) on the variance of N(mean, s^2) with the mean pinned.

    Serves as the null-model prior for the mean-variance pair, whose free
    coordinate is ``mu_1 = mean^2 + s^2``.
    """

    model_dim = 1

    def __init__(self, family: FamilySpec, a: float = 1.0, b: float = 1.0, mean: float = 0.0):
        if family.name != "gaussian_mv":
            raise ValueError("InverseGammaPrior requires the gaussian_mv family")
        if a <= 0 or b <= 0:
            raise ValueError("inverse-gamma hyperparameters must be positive")
        self.family, self.a, self.b, self.mean = family, float(a), float(b), float(mean)

    def log_marginal_cf(self, n, T):
        T = np.asarray(T, dtype=float)
        q = T[..., 0] - 2.0 * self.mean * T[..., 1] + n * self.mean ** 2
        an = self.a + n / 2.0
        return (gammaln(an) - gammaln(self.a) + self.a * math.log(self.b)
                - an * np.log(self.b + q / 2.0) - 0.5 * n * LOG_2PI)

    def log_density(self, mu):
        var = float(np.asarray(mu).reshape(-1)[0]) - self.mean ** 2
        return float(stats.invgamma.logpdf(var, self.a, scale=self.b)) if var > 0 else -math.inf

    def __repr__(self):
        return f"InverseGammaPrior(a={self.a}, b={self.b}, mean={self.mean})"


# --------------------------------------------------------------------------- quadrature

def _simpson_log_weights(k: int) -> np.ndarray:
    """Log Simpson weights (without the h/3 factor) for ``k`` intervals, ``k`` even."""
    w = np.ones(k + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return np.log(w)


def _log_simpson(f_log: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, k: int) -> float:
    nodes = np.linspace(lo, hi, k + 1)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vals = np.asarray(f_log(nodes), dtype=float)
    vals = np.where(np.isnan(vals), -np.inf, vals)
    h = (hi - lo) / k
    return float(logsumexp(vals + _simpson_log_weights(k)) + math.log(h / 3.0))


@dataclass
class NumericDensity(Prior):
    """Prior given by a (vectorised) log density on an interval of a 1-D mean space.

    Streaming updates use a fixed Simpson grid of ``nodes`` intervals; the
    adaptive oracle is :func:`quadrature_log_marginal`.
    """

    family: FamilySpec
    log_pdf: Callable[[np.ndarray], np.ndarray]
    lo: float
    hi: float
    nodes: int = 2 ** 12
    model_dim: int = field(default=1, init=False)

    def __post_init__(self):
        if self.family.dim != 1:
            raise ValueError("NumericDensity supports one-dimensional families only")
        if not self.lo < self.hi:
            raise ValueError("empty quadrature interval")
        if self.nodes % 2:
            raise ValueError("Simpson grid needs an even number of intervals")

    def _integrand(self, n, T):
        def f(mu):
            return self.log_pdf(mu) + self.family.log_lik_stats(mu[:, None], n, np.asarray(T, dtype=float))
        return f

    def log_marginal_cf(self, n, T):
        n_arr = np.asarray(n)
        if n_arr.ndim == 0:
            return _log_simpson(self._integrand(float(n), T), self.lo, self.hi, self.nodes)
        T = np.asarray(T, dtype=float)
        return np.array([_log_simpson(self._integrand(float(ni), ti), self.lo, self.hi, self.nodes)
                         for ni, ti in zip(n_arr.reshape(-1), T.reshape(-1, 1))]).reshape(n_arr.shape)

    def log_density(self, mu):
        return float(self.log_pdf(np.asarray(mu, dtype=float).reshape(-1))[0])

    def normalization(self, max_nodes: int = 2 ** 15) -> float:
        return math.exp(_log_simpson(self.log_pdf, self.lo, self.hi, max_nodes))

    def normalization_error(self) -> float:
        return abs(self.normalization() - 1.0)


def quadrature_log_marginal(family: FamilySpec, prior: NumericDensity, sample,
                            tol: float = 1e-6, min_nodes: int = 2 ** 6, max_nodes: int = 2 ** 15) -> float:
    """``log integral omega(mu) p_mu(x^n) dmu`` by grid-doubling Simpson quadrature.

    Stops once two successive refinements differ by less than ``tol``;
    raises :class:`GridTooCoarse` if that does not happen by ``max_nodes``.
    """
    x = family.check_sample(sample)
    if x.size == 0:
        return 0.0
    T = family.suff_stat(x).sum(axis=0)
    carrier = float(family.log_carrier(x).sum())
    f = prior._integrand(float(x.size), T)
    k = min_nodes
    prev = _log_simpson(f, prior.lo, prior.hi, k)
    while k < max_nodes:
        k *= 2
        cur = _log_simpson(f, prior.lo, prior.hi, k)
        if abs(cur - prev) < tol:
            return cur + carrier
        prev = cur
    raise GridTooCoarse(f"no convergence to {tol} within {max_nodes} Simpson intervals")


# --------------------------------------------------------------------------- streaming state

@dataclass(frozen=True)
class MarginalState:
    """Running Bayes marginal ``log p_B(x^n)`` of one model (immutable)."""

    prior: Prior
    n: int = 0
    T: tuple = ()
    log_marginal: float = 0.0

    def __post_init__(self):
        if not self.T:
            object.__setattr__(self, "T", (0.0,) * self.prior.family.dim)

    @property
    def family(self) -> FamilySpec:
        return self.prior.family

    def _phi(self, x):
        arr = np.asarray([x], dtype=float).reshape(-1)
        if arr.size != 1:
            raise InvalidObservation(f"expected a scalar observation, got {x!r}")
        self.family.check_sample(arr)
        return arr, self.family.suff_stat(arr)[0]

    def log_predictive(self, x) -> float:
        arr, phi = self._phi(x)
        inc = self.prior.log_predictive_cf(self.n, np.asarray(self.T), phi) \
            + float(self.family.log_carrier(arr)[0])
        if inc == -math.inf or math.isnan(inc):
            raise NumericUnderflow(f"predictive density of {x!r} is zero")
        return inc

    def update(self, x) -> "MarginalState":
        inc = self.log_predictive(x)
        _, phi = self._phi(x)
        return replace(self, n=self.n + 1, T=tuple(np.asarray(self.T) + phi),
                       log_marginal=self.log_marginal + inc)

    def posterior(self) -> dict:
        return self.prior.posterior(self.n, np.asarray(self.T))


def update(state: MarginalState, x) -> MarginalState:
    return state.update(x)


def log_predictive(state: MarginalState, x) -> float:
    return state.log_predictive(x)


def run(prior: Prior, sample) -> MarginalState:
    state = MarginalState(prior)
    for x in np.asarray(sample, dtype=float).reshape(-1):
        state = state.update(x)
    return state


def log_marginal(prior: Prior, sample) -> float:
    """Closed-form log marginal of a whole sample (no streaming)."""
    fam = prior.family
    x = fam.check_sample(sample)
    if x.size == 0:
        return 0.0
    T = fam.suff_stat(x).sum(axis=0)
    return float(prior.log_marginal_cf(x.size, T)) + float(fam.log_carrier(x).sum())


# --------------------------------------------------------------------------- Laplace

def laplace_target(prior: Prior, mu_hat) -> float:
    """Limit ``log(sqrt(det I(mu)) / omega(mu))`` of the Laplace diagnostic."""
    info = prior.family.fisher_info(np.asarray(mu_hat, dtype=float))
    return 0.5 * math.log(np.linalg.det(info)) - prior.log_density(mu_hat)


def laplace_diagnostic(state: MarginalState, family: FamilySpec, sample) -> float:
    """``log p_mle(x^n) - log p_B(x^n) - (m/2) log(n / 2pi)`` for a full-dimensional model."""
    prior = state.prior
    if prior.model_dim != family.dim:
        raise ValueError("Laplace diagnostic needs a prior over the full mean space")
    x = family.check_sample(sample)
    mu_hat = mle(x, family)
    n = x.size
    return (family.log_likelihood(x, mu_hat.values) - state.log_marginal
            - family.dim / 2.0 * math.log(n / (2.0 * math.pi)))
