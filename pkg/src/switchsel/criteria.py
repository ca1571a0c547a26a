"""Model selection criteria, robust sequential testing and post-selection estimation.

Every criterion maps a sample prefix to a :class:`Decision` carrying the
selected model and the evidence that drove it.  For the switch and
Bayes-factor criteria the evidence is a ratio ``r = p_B0 / p_alt`` (small is
evidence against the simple model).  For AIC, BIC and Hannan-Quinn it is the
penalised log likelihood ratio, a log-scale quantity.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np
from scipy import stats

from switchsel.errors import EmptySample, MismatchedN, NotAnytimeValid, NTooSmall, UndefinedMLE
from switchsel.evidence import MarginalState, Prior, run
from switchsel.expfam import MeanParam, NestedPair, mle, project0
from switchsel.switchcrit import SwitchPrior, SwitchState, log_switch_ratio, run_switch

KINDS = ("switch", "bayes", "aic", "bic", "hq")
ANYTIME_VALID = frozenset({"switch", "bayes"})


@dataclass(frozen=True)
class Criterion:
    kind: str
    gamma: float = 1.0  # switch threshold on p_sw1 / p_B0
    t: float = 1.0  # AIC conservativeness
    c: float = 1.0  # Hannan-Quinn constant

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown criterion {self.kind!r}; expected one of {KINDS}")
        if self.gamma <= 0 or self.t <= 0 or self.c <= 0:
            raise ValueError("criterion parameters must be positive")

    @classmethod
    def switch(cls, gamma: float = 1.0):
        return cls("switch", gamma=gamma)

    @classmethod
    def bayes(cls):
        return cls("bayes")

    @classmethod
    def aic(cls, t: float = 1.0):
        return cls("aic", t=t)

    @classmethod
    def bic(cls):
        return cls("bic")

    @classmethod
    def hq(cls, c: float = 1.0):
        return cls("hq", c=c)

    @property
    def anytime_valid(self) -> bool:
        return self.kind in ANYTIME_VALID


@dataclass(frozen=True)
class Decision:
    """Selected model plus evidence.

    ``evidence`` is the ratio ``r`` for the switch and Bayes criteria and the
    penalised log likelihood ratio (``log_scale=True``) for AIC, BIC and HQ.
    ``log_evidence`` is carried separately so it survives when ``r``
    underflows.
    """

    selected: int
    evidence: float
    n: int
    criterion: str = ""
    log_scale: bool = False
    log_evidence: float = math.nan

    def __post_init__(self):
        if self.selected not in (0, 1):
            raise ValueError("selected must be 0 or 1")
        if math.isnan(self.log_evidence):
            if self.log_scale:
                value = self.evidence
            else:
                value = math.log(self.evidence) if self.evidence > 0 else -math.inf
            object.__setattr__(self, "log_evidence", value)

    @property
    def linear_evidence(self) -> float:
        return _saturating_exp(self.evidence) if self.log_scale else self.evidence


def _saturating_exp(v: float) -> float:
    """``exp`` clipped to the largest finite double, keeping evidence finite."""
    if v >= math.log(sys.float_info.max):
        return sys.float_info.max
    return math.exp(v)


@dataclass(frozen=True)
class NestedModel:
    """A nested pair together with the priors and switch prior used for evidence."""

    pair: NestedPair
    prior0: Prior
    prior1: Prior
    switch_prior: SwitchPrior = field(default_factory=SwitchPrior)


# --------------------------------------------------------------------------- Bayes / switch

def bfms_select(state0: MarginalState, state1: MarginalState) -> Decision:
    """Bayes factor selection with equal model priors; evidence ``p_B0 / p_B1``."""
    if state0.n != state1.n:
        raise MismatchedN(f"states at different sample sizes: {state0.n} vs {state1.n}")
    log_r = state0.log_marginal - state1.log_marginal
    return Decision(1 if log_r < 0 else 0, _saturating_exp(log_r), state0.n, "bayes", log_evidence=log_r)


def switch_select(state: SwitchState, gamma: float = 1.0) -> Decision:
    log_ratio = log_switch_ratio(state)
    selected = 0 if log_ratio <= math.log(gamma) else 1
    return Decision(selected, _saturating_exp(-log_ratio), state.n, "switch", log_evidence=-log_ratio)


# --------------------------------------------------------------------------- penalised likelihood

def log_likelihood_ratio(sample, pair: NestedPair) -> float:
    """``log p_mle1(x^n) - log p_mle0(x^n)``, evaluated through the densities."""
    fam = pair.family
    x = fam.check_sample(sample)
    mu1 = mle(x, fam)
    mu0 = project0(mu1, pair)
    if not mu0.inside:
        raise UndefinedMLE(f"null-model MLE {mu0.values.tolist()} is not inside the mean space")
    return fam.log_likelihood(x, mu1.values) - fam.log_likelihood(x, mu0.values)


def _n(sample) -> int:
    return int(np.asarray(sample, dtype=float).reshape(-1).size)


def aic_select(sample, pair: NestedPair, threshold_t: float = 1.0) -> Decision:
    """Conservative AIC: select 1 iff ``log LR - (m1 - m0) > -log t``; ``t = 1`` is plain AIC.

    An exact tie keeps the simple model, as for the switch and Bayes criteria.
    """
    if threshold_t <= 0:
        raise ValueError("threshold must be positive")
    if _n(sample) == 0:
        raise EmptySample("AIC needs at least one observation")
    ev = log_likelihood_ratio(sample, pair) - (pair.m1 - pair.m0)
    return Decision(1 if ev > -math.log(threshold_t) else 0, ev, _n(sample), "aic", log_scale=True)


def glrt_threshold(alpha: float, df: int = 1) -> float:
    """AIC threshold ``t`` that turns the rule above into the level-``alpha`` likelihood-ratio test.

    Solves ``log LR - df > -log t  <=>  2 log LR > chi2_{df, 1 - alpha}``.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    return math.exp(df - stats.chi2.ppf(1.0 - alpha, df) / 2.0)


def bic_select(sample, pair: NestedPair) -> Decision:
    n = _n(sample)
    if n == 0:
        raise EmptySample("BIC needs at least one observation")
    ev = log_likelihood_ratio(sample, pair) - (pair.m1 - pair.m0) / 2.0 * math.log(n)
    return Decision(1 if ev > 0 else 0, ev, n, "bic", log_scale=True)


def hq_select(sample, pair: NestedPair, c: float = 1.0) -> Decision:
    """Hannan-Quinn; equality of the two penalised likelihoods selects the complex model."""
    n = _n(sample)
    if n < 3:
        raise NTooSmall(f"Hannan-Quinn needs n >= 3, got {n}")
    ev = log_likelihood_ratio(sample, pair) - c * math.log(math.log(n))
    return Decision(1 if ev >= 0 else 0, ev, n, "hq", log_scale=True)


def select(criterion: Criterion, sample, model: NestedModel) -> Decision:
    """Evaluate any criterion on a whole sample prefix."""
    if criterion.kind == "aic":
        return aic_select(sample, model.pair, criterion.t)
    if criterion.kind == "bic":
        return bic_select(sample, model.pair)
    if criterion.kind == "hq":
        return hq_select(sample, model.pair, criterion.c)
    if criterion.kind == "bayes":
        return bfms_select(run(model.prior0, sample), run(model.prior1, sample))
    state = run_switch(model.prior0, model.prior1, sample, model.switch_prior)
    return switch_select(state, criterion.gamma)


# --------------------------------------------------------------------------- robust testing

REJECT = "reject"
CONTINUE = "continue"


class RobustTest:
    """Sequential level-``alpha`` test that rejects at the first ``r <= alpha``.

    Rejection is absorbing.  Only criteria whose evidence is an inverse test
    martingale under a singleton null qualify.
    """

    def __init__(self, alpha: float, criterion: str = "switch", pair: Optional[NestedPair] = None):
        if criterion not in ANYTIME_VALID:
            raise NotAnytimeValid(f"{criterion!r} evidence is not valid under optional stopping")
        if pair is not None and not pair.is_singleton:
            raise NotAnytimeValid("robust testing requires a singleton null model")
        if not 0 <= alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        self.alpha = alpha
        self.criterion = criterion
        self.rejected_at: Optional[int] = None

    @property
    def rejected(self) -> bool:
        return self.rejected_at is not None

    def step(self, decision: Decision) -> str:
        if decision.criterion and decision.criterion != self.criterion:
            raise NotAnytimeValid(f"expected {self.criterion} decisions, got {decision.criterion}")
        if not self.rejected and self.alpha > 0 and decision.evidence <= self.alpha:
            self.rejected_at = decision.n
        return REJECT if self.rejected else CONTINUE


def robust_test(decisions: Iterable[Decision], alpha: float, pair: Optional[NestedPair] = None) -> list[str]:
    decisions = list(decisions)
    kind = next((d.criterion for d in decisions if d.criterion), "switch")
    test = RobustTest(alpha, kind, pair)
    return [test.step(d) for d in decisions]


# --------------------------------------------------------------------------- post-selection estimation

Estimator = Callable[..., MeanParam]


def post_selection_estimate(decision: Decision, sample, pair: NestedPair,
                            estimator1: Estimator = mle,
                            estimator0: Optional[Callable[[np.ndarray, NestedPair], MeanParam]] = None) -> MeanParam:
    """Estimate from the selected model.

    ``estimator1(sample, family)`` estimates in the complex model.  The simple
    model's estimate defaults to the projection of that estimate, i.e. the
    pinned coordinates are replaced by their fixed values.
    """
    if decision.selected == 1:
        return estimator1(sample, pair.family)
    if estimator0 is not None:
        return estimator0(sample, pair)
    if pair.is_singleton:
        return MeanParam.of(pair.family, pair.null_point)
    return project0(estimator1(sample, pair.family), pair)
