"""The switch distribution for two nested models.

``p_sw1(x^n) = sum_t pi(t) p_B0(x^{t-1}) p_B1(x_t..x_n | x^{t-1})`` with the
switch prior supported on ``t = 1, 2, 4, 8, ...``.  For ``t > n`` the
conditional block is empty, so those terms collapse onto ``p_B0(x^n)`` times
the tail mass of the prior.

:class:`SwitchState` keeps the two running marginals and one snapshot of
``(log p_B0(x^{t-1}), log p_B1(x^{t-1}))`` per power of two, so memory is
``O(log n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp, zeta

from switchsel import kernels
from switchsel.evidence import MarginalState, Prior


def default_pi(i: int) -> float:
    """``pi(2^i) = 1 / ((i + 1)(i + 2))``."""
    if i < 0:
        raise ValueError("i must be nonnegative")
    return 1.0 / ((i + 1) * (i + 2))


def is_power_of_two(t: int) -> bool:
    return t >= 1 and (t & (t - 1)) == 0


@dataclass(frozen=True)
class SwitchPrior:
    """Prior on switch times ``2^i``.

    ``kappa == 2`` with ``closed_form=True`` gives :func:`default_pi`; any other
    ``kappa >= 2`` uses ``pi(2^i) = (i + 1)^(-kappa) / zeta(kappa)``.
    """

    kappa: float = 2.0
    closed_form: bool = True

    def __post_init__(self):
        if self.kappa < 2:
            raise ValueError("kappa must be at least 2")
        if self.closed_form and self.kappa != 2:
            object.__setattr__(self, "closed_form", False)

    def mass(self, i: int) -> float:
        """``pi(2^i)``."""
        if self.closed_form:
            return default_pi(i)
        return (i + 1) ** (-self.kappa) / zeta(self.kappa)

    def log_mass(self, i: int) -> float:
        return math.log(self.mass(i))

    def tail_from(self, i: int) -> float:
        """``sum_{j >= i} pi(2^j)``."""
        if i <= 0:
            return 1.0
        if self.closed_form:
            return 1.0 / (i + 1)
        return float(zeta(self.kappa, i + 1) / zeta(self.kappa))

    def pi(self, t: int) -> float:
        """Mass on switch time ``t``; zero unless ``t`` is a power of two."""
        if not is_power_of_two(t):
            return 0.0
        return self.mass(t.bit_length() - 1)

    def g(self, n: int) -> float:
        """``sum_{t >= n} pi(t)``."""
        if n <= 1:
            return 1.0
        return self.tail_from((n - 1).bit_length())

    def tail_after(self, n: int) -> float:
        """``sum_{t > n} pi(t)``, the weight of not-yet-switched strategies at sample size n."""
        return self.g(n + 1)

    def log_pi_table(self, count: int) -> np.ndarray:
        return np.log([self.mass(i) for i in range(count)])

    def log_tail_after_table(self, N: int) -> np.ndarray:
        """``log sum_{t > n} pi(t)`` for ``n = 0..N``."""
        return _log_tail_table(self, N)


@lru_cache(maxsize=32)
def _log_tail_table(prior: SwitchPrior, N: int) -> np.ndarray:
    powers_le = np.frexp(np.arange(N + 1))[1]  # count of powers of two <= n
    tails = {int(i): math.log(prior.tail_from(int(i))) for i in np.unique(powers_le)}
    table = np.array([tails[int(i)] for i in powers_le])
    table.setflags(write=False)
    return table


@dataclass(frozen=True)
class SwitchState:
    state0: MarginalState
    state1: MarginalState
    prior: SwitchPrior = field(default_factory=SwitchPrior)
    n: int = 0
    snapshots: tuple = ((1, 0.0, 0.0),)

    @classmethod
    def start(cls, prior0: Prior, prior1: Prior, switch_prior: SwitchPrior | None = None) -> "SwitchState":
        return cls(MarginalState(prior0), MarginalState(prior1), switch_prior or SwitchPrior())

    @property
    def snapshot_map(self) -> dict[int, tuple[float, float]]:
        return {t: (a, b) for t, a, b in self.snapshots}

    @property
    def log_pb0(self) -> float:
        return self.state0.log_marginal

    @property
    def log_pb1(self) -> float:
        return self.state1.log_marginal


def sw_update(state: SwitchState, x) -> SwitchState:
    """Process one observation; after observation ``n`` record key ``t = n + 1`` if it is a power of two."""
    s0, s1 = state.state0.update(x), state.state1.update(x)
    n = state.n + 1
    snaps = state.snapshots
    if is_power_of_two(n + 1):
        snaps = snaps + ((n + 1, s0.log_marginal, s1.log_marginal),)
    return replace(state, state0=s0, state1=s1, n=n, snapshots=snaps)


def run_switch(prior0: Prior, prior1: Prior, sample, switch_prior: SwitchPrior | None = None) -> SwitchState:
    state = SwitchState.start(prior0, prior1, switch_prior)
    for x in np.asarray(sample, dtype=float).reshape(-1):
        state = sw_update(state, x)
    return state


def _switched_terms(state: SwitchState, upto: int) -> list[float]:
    """``log pi(t) + log pbar_t(x^n)`` for snapshot times ``t <= upto``."""
    lp1 = state.log_pb1
    return [state.prior.log_mass(t.bit_length() - 1) + a + lp1 - b
            for t, a, b in state.snapshots if t <= upto]


def log_psw1(state: SwitchState) -> float:
    terms = _switched_terms(state, state.n)
    terms.append(math.log(state.prior.tail_after(state.n)) + state.log_pb0)
    return float(logsumexp(terms))


def log_switch_ratio(state: SwitchState) -> float:
    """``log(p_sw1 / p_B0)`` at the current sample size."""
    return log_psw1(state) - state.log_pb0


def delta_sw(state: SwitchState, gamma: float = 1.0) -> int:
    """0 iff ``p_sw1 / p_B0 <= gamma`` (ties go to the simple model)."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return 0 if log_switch_ratio(state) <= math.log(gamma) else 1


def r_sw(state: SwitchState) -> float:
    """Robust-test evidence ``p_B0 / p_sw1``; small values speak against the null."""
    return math.exp(-log_switch_ratio(state))


def original_switch_select(state: SwitchState) -> int:
    """Two-model instance of the multi-switch criterion.

    Selects 1 iff ``sum_{1 <= t < n} pi(t) pbar_t(x^n) > (1 + g(n)) p_B0(x^n)``.
    """
    if state.n < 1:
        raise ValueError("the original criterion needs n >= 1")
    terms = _switched_terms(state, state.n - 1)
    if not terms:
        return 0
    lhs = float(logsumexp(terms))
    rhs = math.log1p(state.prior.g(state.n)) + state.log_pb0
    return 1 if lhs > rhs else 0


# --------------------------------------------------------------------------- batch paths

def switch_log_ratio_paths(D, prior: SwitchPrior | None = None) -> np.ndarray:
    """``log(p_sw1 / p_B0)`` for every prefix, from log Bayes-factor paths ``D`` (reps, N+1)."""
    prior = prior or SwitchPrior()
    D = np.atleast_2d(np.asarray(D, dtype=float))
    N = D.shape[1] - 1
    log_pi = prior.log_pi_table(max(N.bit_length(), 1))
    return kernels.switch_log_ratio_paths(D, log_pi, prior.log_tail_after_table(N))


def snapshot_indices(n: int) -> np.ndarray:
    """Prefix lengths ``t - 1`` for the switch times ``t = 2^i <= n``."""
    return (1 << np.arange(max(n, 0).bit_length())) - 1


def switch_log_ratio_at(D_snap, D_n, n: int, prior: SwitchPrior | None = None) -> np.ndarray:
    """``log(p_sw1 / p_B0)`` at a single ``n`` from ``D`` at ``snapshot_indices(n)`` and at ``n``.

    ``D_snap`` has shape ``(reps, len(snapshot_indices(n)))``.
    """
    prior = prior or SwitchPrior()
    D_snap = np.atleast_2d(np.asarray(D_snap, dtype=float))
    D_n = np.asarray(D_n, dtype=float).reshape(-1)
    k = D_snap.shape[1]
    log_pi = prior.log_pi_table(k)
    terms = log_pi[None, :] + D_n[:, None] - D_snap
    tail = math.log(prior.tail_after(n))
    if k == 0:
        return np.full(D_n.shape, tail)
    return np.logaddexp(logsumexp(terms, axis=1), tail)
