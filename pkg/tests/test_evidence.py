import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

import oracles
from switchsel.errors import GridTooCoarse, InvalidObservation
from switchsel.evidence import (BetaPrior, GammaPrior, InverseGammaPrior, MarginalState, NormalInverseGammaPrior,
                                NormalPrior, NumericDensity, PointMass, laplace_diagnostic, laplace_target,
                                log_marginal, log_predictive, quadrature_log_marginal, run, update)
from switchsel.expfam import bernoulli, gaussian_location, gaussian_mean_variance, mle, poisson


def beta_density(a=1.0, b=1.0):
    return NumericDensity(bernoulli(), lambda m: stats.beta.logpdf(m, a, b), 0.0, 1.0)


def test_beta_bernoulli_example():
    state = run(BetaPrior(bernoulli()), [1, 0, 1])
    assert state.log_marginal == pytest.approx(math.log(1 / 12), abs=1e-14)
    assert state.n == 3


def test_empty_sample_is_zero():
    for prior in (BetaPrior(bernoulli()), NormalPrior(gaussian_location()), GammaPrior(poisson())):
        assert MarginalState(prior).log_marginal == 0.0
        assert log_marginal(prior, []) == 0.0
    assert quadrature_log_marginal(bernoulli(), beta_density(), []) == 0.0


def test_normal_prior_single_point():
    state = update(MarginalState(NormalPrior(gaussian_location(), 0.0, 1.0)), 0.0)
    assert state.log_marginal == pytest.approx(-0.5 * math.log(4 * math.pi), abs=1e-14)


def test_predictive_examples():
    s = MarginalState(BetaPrior(bernoulli()))
    assert log_predictive(s, 1) == pytest.approx(math.log(0.5), abs=1e-15)
    assert log_predictive(update(s, 1), 1) == pytest.approx(math.log(2 / 3), abs=1e-15)
    g = MarginalState(GammaPrior(poisson(), 1.0, 1.0))
    assert log_predictive(g, 0) == pytest.approx(math.log(0.5), abs=1e-15)
    # negative binomial predictive: r = shape, p = rate / (rate + 1)
    assert log_predictive(g, 3) == pytest.approx(stats.nbinom.logpmf(3, 1, 0.5), abs=1e-14)
    # predictive does not mutate
    assert s.n == 0 and s.log_marginal == 0.0


def test_invalid_observation():
    with pytest.raises(InvalidObservation):
        update(MarginalState(BetaPrior(bernoulli())), 2)
    with pytest.raises(InvalidObservation):
        update(MarginalState(GammaPrior(poisson())), -1)


def test_beta_bernoulli_matches_exact_fractions():
    for x in oracles.all_binary(5):
        exact = oracles.beta_bernoulli_marginal(x, 2, 3)
        assert run(BetaPrior(bernoulli(), 2, 3), x).log_marginal == pytest.approx(math.log(exact), abs=1e-12)


def test_gaussian_marginal_matches_mvn():
    rng = np.random.default_rng(5)
    fam = gaussian_location(1.5)
    for _ in range(5):
        x = rng.normal(0.3, 1.5, 12)
        got = run(NormalPrior(fam, 0.2, 0.7), x).log_marginal
        assert got == pytest.approx(oracles.gaussian_marginal(x, 1.5, 0.2, 0.7), abs=1e-10)


def test_poisson_marginal_matches_quad():
    rng = np.random.default_rng(6)
    for _ in range(3):
        x = rng.poisson(2.3, 15)
        got = run(GammaPrior(poisson(), 2.0, 0.5), x).log_marginal
        assert got == pytest.approx(oracles.poisson_gamma_marginal(x, 2.0, 0.5), abs=1e-8)


def test_mean_variance_marginals_match_student_t():
    rng = np.random.default_rng(7)
    fam = gaussian_mean_variance()
    x = rng.normal(0.4, 1.3, 9)
    got = run(NormalInverseGammaPrior(fam, 0.1, 2.0, 3.0, 1.5), x).log_marginal
    assert got == pytest.approx(oracles.nig_marginal(x, 0.1, 2.0, 3.0, 1.5), abs=1e-10)
    got0 = run(InverseGammaPrior(fam, 2.5, 1.2, mean=0.0), x).log_marginal
    assert got0 == pytest.approx(oracles.inverse_gamma_marginal(x, 0.0, 2.5, 1.2), abs=1e-10)


def test_point_mass_is_likelihood():
    x = [1, 0, 0, 1, 1]
    got = run(PointMass(bernoulli(), [0.3]), x).log_marginal
    assert got == pytest.approx(math.log(float(oracles.bernoulli_point(x, Fraction(3, 10)))), abs=1e-14)


def test_quadrature_matches_closed_form():
    x = [1, 0, 1]
    assert quadrature_log_marginal(bernoulli(), beta_density(), x) == pytest.approx(math.log(1 / 12), abs=1e-8)
    fam = gaussian_location()
    normal = NumericDensity(fam, lambda m: stats.norm.logpdf(m), -14.0, 14.0)
    for a in (0.3, 2.0):
        assert quadrature_log_marginal(fam, normal, [a]) == pytest.approx(quadrature_log_marginal(fam, normal, [-a]),
                                                                           abs=1e-12)
    rng = np.random.default_rng(8)
    y = rng.normal(0.5, 1.0, 40)
    assert quadrature_log_marginal(fam, normal, y) == pytest.approx(log_marginal(NormalPrior(fam), y), abs=1e-6)


def test_quadrature_grid_too_coarse():
    spiky = NumericDensity(bernoulli(), lambda m: stats.beta.logpdf(m, 1, 1), 0.0, 1.0)
    with pytest.raises(GridTooCoarse):
        quadrature_log_marginal(bernoulli(), spiky, [1, 0] * 400, tol=1e-12, max_nodes=8)


def test_chain_rule_and_closed_form():
    rng = np.random.default_rng(9)
    x = rng.normal(0.2, 1.0, 10_000)
    prior = NormalPrior(gaussian_location())
    state, total = MarginalState(prior), 0.0
    for v in x:
        total += state.log_predictive(v)
        state = state.update(v)
    assert state.log_marginal == total
    assert state.log_marginal == pytest.approx(log_marginal(prior, x), abs=1e-12 * 10_000)


def test_exchangeability():
    rng = np.random.default_rng(10)
    x = rng.poisson(1.7, 30)
    prior = GammaPrior(poisson(), 1.5, 0.8)
    a = run(prior, x).log_marginal
    b = run(prior, rng.permutation(x)).log_marginal
    assert a == pytest.approx(b, abs=1e-11)


def test_marginal_consistency_at_split():
    x = [1, 1, 0, 1, 0, 0, 1]
    prior = BetaPrior(bernoulli())
    for t in range(1, len(x) + 1):
        head = run(prior, x[:t - 1])
        cond = run(prior, x).log_marginal - head.log_marginal
        exact = oracles.beta_bernoulli_marginal(x) / oracles.beta_bernoulli_marginal(x[:t - 1])
        assert cond == pytest.approx(math.log(exact), abs=1e-12)


@pytest.mark.parametrize("n", range(1, 11))
def test_mixture_mass_sums_to_one(n):
    prior = BetaPrior(bernoulli(), 0.5, 0.5)
    total = sum(math.exp(run(prior, x).log_marginal) for x in oracles.all_binary(n))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_laplace_gaussian():
    fam = gaussian_location()
    prior = NormalPrior(fam)
    rng = np.random.default_rng(12)
    x = rng.normal(0.5, 1.0, 10_000)
    devs = []
    for n in (100, 1000, 10_000):
        state = run(prior, x[:n])
        devs.append(laplace_diagnostic(state, fam, x[:n]) - laplace_target(prior, mle(x[:n], fam).values))
    assert abs(devs[-1]) < 0.05
    assert abs(devs[2] - devs[1]) < abs(devs[1] - devs[0])


def test_laplace_bernoulli_limit_is_log_two():
    fam = bernoulli()
    prior = BetaPrior(fam)
    n = 20_000
    x = [1, 0] * (n // 2)
    exact = oracles.beta_bernoulli_marginal(x)
    state = MarginalState(prior, n=n, T=(n / 2,),
                          log_marginal=math.log(exact.numerator) - math.log(exact.denominator))
    assert laplace_target(prior, [0.5]) == pytest.approx(math.log(2), abs=1e-14)
    assert laplace_diagnostic(state, fam, x) == pytest.approx(math.log(2), abs=1e-3)


def test_marginal_state_is_a_value():
    s = MarginalState(BetaPrior(bernoulli()))
    t = s.update(1)
    assert s.n == 0 and t.n == 1 and s != t


def test_posterior_hyperparameters():
    post = run(BetaPrior(bernoulli(), 1, 1), [1, 1, 0]).posterior()
    assert post == pytest.approx({"a": 3.0, "b": 2.0})
