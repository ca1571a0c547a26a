import math

import numpy as np
import pytest
from scipy import stats

from switchsel.criteria import (CONTINUE, REJECT, Criterion, Decision, NestedModel, RobustTest, aic_select,
                                bfms_select, bic_select, glrt_threshold, hq_select, log_likelihood_ratio,
                                post_selection_estimate, robust_test, select, switch_select)
from switchsel.errors import EmptySample, MismatchedN, NotAnytimeValid, NTooSmall, UndefinedMLE
from switchsel.evidence import (BetaPrior, InverseGammaPrior, MarginalState, NormalInverseGammaPrior, NormalPrior,
                                PointMass, log_marginal, run)
from switchsel.expfam import (NestedPair, bernoulli, gaussian_location, gaussian_mean_variance,
                              map_estimate, mle)
from switchsel.switchcrit import SwitchState, delta_sw, r_sw, run_switch

GAUSS = NestedPair(gaussian_location(), 0, (0.0,))
BERN = NestedPair(bernoulli(), 0, (0.5,))
MV = NestedPair(gaussian_mean_variance(), 1, (0.0,))
GAUSS_MODEL = NestedModel(GAUSS, PointMass(GAUSS.family, [0.0]), NormalPrior(GAUSS.family))
BERN_MODEL = NestedModel(BERN, PointMass(BERN.family, [0.5]), BetaPrior(BERN.family))


def test_bfms_examples():
    d = bfms_select(MarginalState(BERN_MODEL.prior0), MarginalState(BERN_MODEL.prior1))
    assert (d.selected, d.evidence, d.n) == (0, 1.0, 0)
    d = select(Criterion.bayes(), [1, 0], BERN_MODEL)
    assert d.evidence == pytest.approx(1.5, abs=1e-14)
    assert d.selected == 0
    with pytest.raises(MismatchedN):
        bfms_select(run(BERN_MODEL.prior0, [1]), MarginalState(BERN_MODEL.prior1))


def test_aic_examples():
    assert log_likelihood_ratio([1, 1], GAUSS) == pytest.approx(1.0, abs=1e-14)
    d = aic_select([1.0, 1.0], GAUSS, 1.0)
    assert d.selected == 0 and d.log_scale
    assert d.evidence == pytest.approx(0.0, abs=1e-14)
    assert aic_select([1.1, 1.0], GAUSS, 1.0).selected == 1
    with pytest.raises(EmptySample):
        aic_select([], GAUSS)
    with pytest.raises(UndefinedMLE):
        aic_select([1, 1, 1], BERN)


def test_glrt_threshold_calibrates_level():
    t = glrt_threshold(0.05)
    assert t == pytest.approx(math.exp(1 - stats.chi2.ppf(0.95, 1) / 2), rel=1e-14)
    assert t == pytest.approx(0.3982, abs=1e-4)
    # the selection boundary sits exactly at the chi-square critical value
    z = stats.norm.ppf(0.975)
    n = 50
    edge = z / math.sqrt(n)
    assert aic_select(np.full(n, edge * (1 + 1e-9)), GAUSS, t).selected == 1
    assert aic_select(np.full(n, edge * (1 - 1e-9)), GAUSS, t).selected == 0
    with pytest.raises(ValueError):
        glrt_threshold(0.0)


def test_glrt_threshold_monte_carlo_level():
    rng = np.random.default_rng(4)
    reps, n, alpha = 20_000, 30, 0.05
    means = rng.normal(0, 1, (reps, n)).mean(axis=1)
    t = glrt_threshold(alpha)
    rate = np.mean(n * means ** 2 / 2 - 1 > -math.log(t))
    assert abs(rate - alpha) < 4 * math.sqrt(alpha * (1 - alpha) / reps)


def test_bic_examples():
    d = bic_select([0.7], GAUSS)
    assert d.evidence == pytest.approx(log_likelihood_ratio([0.7], GAUSS))
    x = [1.0, -1.0, 0.5, -0.5]
    d = bic_select(x, GAUSS)
    assert d.evidence == pytest.approx(-0.5 * math.log(4), abs=1e-14)
    assert d.selected == 0


def test_hq_examples():
    assert math.log(math.log(3)) == pytest.approx(0.0940478, abs=1e-6)
    d = hq_select([1.0, -1.0, 0.0], GAUSS, 1.0)
    assert d.evidence == pytest.approx(-math.log(math.log(3)), abs=1e-14) and d.selected == 0
    with pytest.raises(NTooSmall):
        hq_select([1.0, 2.0], GAUSS)
    # selection iff n mu^2 / 2 > c log log n
    rng = np.random.default_rng(5)
    for _ in range(50):
        x = rng.normal(0.1, 1, 40)
        assert hq_select(x, GAUSS, 1.2).selected == int(40 * x.mean() ** 2 / 2 >= 1.2 * math.log(math.log(40)))


def test_hq_tie_selects_complex():
    # pick the sample so the penalised log LR is exactly zero
    n, c = 4, 1.0
    target = math.sqrt(2 * c * math.log(math.log(n)) / n)
    d = hq_select(np.full(n, target), GAUSS, c)
    if d.evidence == 0.0:
        assert d.selected == 1
    assert hq_select(np.full(n, target * (1 - 1e-9)), GAUSS, c).selected == 0


def test_switch_select_wraps_delta():
    rng = np.random.default_rng(6)
    d = switch_select(SwitchState.start(BERN_MODEL.prior0, BERN_MODEL.prior1))
    assert d.evidence == 1.0 and d.selected == 0
    for _ in range(100):
        x = rng.integers(0, 2, rng.integers(1, 20))
        s = run_switch(BERN_MODEL.prior0, BERN_MODEL.prior1, x)
        d = switch_select(s)
        assert d.selected == delta_sw(s)
        assert d.evidence == pytest.approx(r_sw(s), rel=1e-14)
        if d.evidence <= 0.5:
            assert d.selected == 1


def test_decision_validation_and_log_evidence():
    with pytest.raises(ValueError):
        Decision(2, 1.0, 0)
    d = Decision(1, 0.25, 3)
    assert d.log_evidence == pytest.approx(math.log(0.25))
    huge = select(Criterion.bayes(), np.full(4000, 3.0), GAUSS_MODEL)
    assert huge.evidence == 0.0 and math.isfinite(huge.log_evidence) and huge.log_evidence < -1000


def test_criterion_validation():
    with pytest.raises(ValueError):
        Criterion("cv")
    with pytest.raises(ValueError):
        Criterion.hq(0.0)
    assert Criterion.switch().anytime_valid and not Criterion.aic().anytime_valid


def test_criteria_are_pure():
    x = np.random.default_rng(7).normal(0.2, 1, 50)
    for crit in (Criterion.switch(), Criterion.bayes(), Criterion.aic(), Criterion.bic(), Criterion.hq()):
        assert select(crit, x, GAUSS_MODEL) == select(crit, x, GAUSS_MODEL)


def test_robust_test_rules():
    decisions = [Decision(1, e, n + 1, "switch") for n, e in enumerate([2.0, 0.5, 0.04, 3.0, 0.9])]
    assert robust_test(decisions, 0.0) == [CONTINUE] * 5
    assert robust_test(decisions, 0.05) == [CONTINUE, CONTINUE, REJECT, REJECT, REJECT]
    for a, b in [(0.01, 0.05), (0.05, 0.5), (0.5, 1.0)]:
        ra, rb = robust_test(decisions, a), robust_test(decisions, b)
        assert all(y == REJECT for x, y in zip(ra, rb) if x == REJECT)
    for kind in ("aic", "bic", "hq"):
        with pytest.raises(NotAnytimeValid):
            RobustTest(0.05, kind)
    with pytest.raises(NotAnytimeValid):
        RobustTest(0.05, "switch", MV)
    with pytest.raises(NotAnytimeValid):
        robust_test([Decision(1, 0.0, 3, "aic", log_scale=True)], 0.05)


def test_post_selection_pins_tail():
    x = [0.5, 1.5, -0.2]
    mu1 = mle(x, MV.family)
    est0 = post_selection_estimate(Decision(0, 2.0, 3), x, MV)
    assert est0.values.tolist() == [mu1.values[0], 0.0]
    est1 = post_selection_estimate(Decision(1, 0.1, 3), x, MV)
    np.testing.assert_array_equal(est1.values, mu1.values)
    single = post_selection_estimate(Decision(0, 2.0, 2), [1, 1], BERN)
    assert single.values.tolist() == [0.5]
    mapped = post_selection_estimate(Decision(1, 0.1, 2), [1, 1], BERN,
                                     lambda s, f: map_estimate(s, f, 1.0, [0.5]))
    assert mapped.values[0] == pytest.approx(2.5 / 3)


def test_likelihood_ratio_uses_densities_only():
    # log LR for mean-variance vs pinned mean equals (n/2) log(s0^2 / s1^2)
    x = np.array([0.3, 1.2, -0.4, 2.2, 0.9])
    s1 = x.var()
    s0 = np.mean(x ** 2)
    assert log_likelihood_ratio(x, MV) == pytest.approx(len(x) / 2 * math.log(s0 / s1), rel=1e-12)
    # invariance: rescaling the observation unit leaves the LR unchanged
    assert log_likelihood_ratio(3 * x, MV) == pytest.approx(log_likelihood_ratio(x, MV), rel=1e-12)


def test_mean_variance_bayes_factor():
    x = np.random.default_rng(8).normal(0.8, 1.0, 60)
    fam = MV.family
    model = NestedModel(MV, InverseGammaPrior(fam, 1, 1, mean=0.0), NormalInverseGammaPrior(fam))
    d = select(Criterion.bayes(), x, model)
    assert d.selected == 1
    assert select(Criterion.switch(), x, model).selected == 1


def test_bic_agrees_with_bayes_factor():
    rng = np.random.default_rng(9)
    n, reps = 1000, 1000
    agree = 0
    p0, p1 = GAUSS_MODEL.prior0, GAUSS_MODEL.prior1
    for mu in rng.uniform(-0.12, 0.12, reps):
        x = rng.normal(mu, 1.0, n)
        s0 = MarginalState(p0, n=n, T=(float(x.sum()),), log_marginal=log_marginal(p0, x))
        s1 = MarginalState(p1, n=n, T=(float(x.sum()),), log_marginal=log_marginal(p1, x))
        agree += bfms_select(s0, s1).selected == bic_select(x, GAUSS).selected
    assert agree / reps > 0.95


def test_hq_consistency_contrast():
    rng = np.random.default_rng(10)
    N, reps = 10_000, 200
    n = np.arange(1, N + 1)
    lo = 10
    counts = {1.2: [], 0.5: []}
    for _ in range(reps):
        s = np.cumsum(rng.normal(0, 1, N))
        lr = s ** 2 / (2 * n)
        for c in counts:
            sel = lr[lo - 1:] - c * np.log(np.log(n[lo - 1:])) >= 0
            counts[c].append(int(sel.sum()))
    # spot check the vectorised rule against the library
    x = rng.normal(0, 1, 500)
    assert hq_select(x, GAUSS, 0.5).selected == int((x.sum() ** 2 / 1000 - 0.5 * math.log(math.log(500))) >= 0)
    assert np.median(counts[0.5]) > np.median(counts[1.2])
