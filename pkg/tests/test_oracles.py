import math

import numpy as np
import pytest
from scipy import integrate, stats

from rarebayes.bus import run_bus
from rarebayes.errors import ConfigError
from rarebayes.models import ConstantModel, GaussianConjugate
from rarebayes.oracles import (
    RejectionFloorError,
    chi2_truncated,
    direct_mc_evidence,
    exact_halfspace_conditional,
    gaussian_truncation_radius,
    ks_two_sample,
    rejection_sample,
)
from rarebayes.priors import PriorSpec
from rarebayes.sus import SusConfig

GAUSS = GaussianConjugate((1.0,), 0.2)
PRIOR1 = PriorSpec.standard(1)


def test_rejection_constant_likelihood_is_prior():
    res = rejection_sample(ConstantModel(1, 0.0), PRIOR1, 1.0, 5000, np.random.default_rng(0), batch=5000)
    assert res.acceptance_rate == 1.0 and res.draws == 5000
    assert stats.kstest(res.theta[:, 0], "norm").pvalue > 0.01


def test_rejection_acceptance_rate_at_c_max():
    res = rejection_sample(GAUSS, PRIOR1, GAUSS.c_max, 20_000, np.random.default_rng(1))
    expected = GAUSS.c_max * math.exp(GAUSS.log_evidence())
    se = math.sqrt(expected * (1 - expected) / res.draws)
    assert abs(res.acceptance_rate - expected) <= 3 * se
    post = stats.norm(GAUSS.posterior_mean()[0], GAUSS.posterior_std())
    assert stats.kstest(res.theta[:, 0], post.cdf).pvalue > 0.01


def test_rejection_truncated_composite_above_c_max():
    c = 10 * GAUSS.c_max
    res = rejection_sample(GAUSS, PRIOR1, c, 20_000, np.random.default_rng(2))

    def density(t):
        return stats.norm.pdf(t) * min(1.0, c * math.exp(GAUSS.log_likelihood([t])))

    r = gaussian_truncation_radius(GAUSS, c)
    knots = [1.0 - r, 1.0, 1.0 + r]
    total = integrate.quad(density, -8, 8, points=knots, limit=200)[0]
    grid = np.linspace(-3, 4, 400)
    cdf_grid = np.array([integrate.quad(density, -8, g, points=[k for k in knots if k < g] or None,
                                        limit=200)[0] for g in grid]) / total
    cdf = lambda x: np.interp(x, grid, cdf_grid)
    assert stats.kstest(res.theta[:, 0], cdf).pvalue > 0.01
    # the plain posterior is rejected
    post = stats.norm(GAUSS.posterior_mean()[0], GAUSS.posterior_std())
    assert stats.kstest(res.theta[:, 0], post.cdf).pvalue < 1e-6


def test_rejection_floor_and_validation():
    tiny = ConstantModel(1, -30.0)
    with pytest.raises(RejectionFloorError):
        rejection_sample(tiny, PRIOR1, 1.0, 10, np.random.default_rng(3), batch=10_000)
    with pytest.raises(ConfigError):
        rejection_sample(GAUSS, PRIOR1, 0.0, 10)
    with pytest.raises(ConfigError):
        rejection_sample(GAUSS, PRIOR1, 1.0, 0)


def test_direct_mc_constant_is_exact():
    est = direct_mc_evidence(ConstantModel(2, 0.0), PriorSpec.standard(2), 1000, np.random.default_rng(0))
    assert est.p == 1.0 and est.cov == 0.0


def test_direct_mc_matches_conjugate():
    est = direct_mc_evidence(GAUSS, PRIOR1, 200_000, np.random.default_rng(4))
    assert abs(est.ln_p - GAUSS.log_evidence()) <= 3 * est.ln_std
    assert est.p == pytest.approx(stats.norm.pdf(1.0, 0, math.sqrt(1.04)), rel=0.05)


def test_direct_mc_all_zero_and_count_floor():
    est = direct_mc_evidence(ConstantModel(1, -math.inf), PRIOR1, 1000, np.random.default_rng(0))
    assert est.p == 0.0 and est.cov == math.inf and est.ln_p == -math.inf
    with pytest.raises(ConfigError):
        direct_mc_evidence(GAUSS, PRIOR1, 999)


def test_direct_mc_agrees_with_run_bus():
    mc = direct_mc_evidence(GAUSS, PRIOR1, 200_000, np.random.default_rng(5))
    ev = run_bus(GAUSS, PRIOR1, SusConfig(n=2000)).evidence
    assert abs(mc.ln_p - ev.ln_evidence) <= 3 * math.hypot(mc.ln_std, ev.cov_proxy)


def test_halfspace_unconditional_at_minus_inf():
    u = exact_halfspace_conditional(-math.inf, 20_000, np.random.default_rng(0), dim=2)
    assert stats.kstest(u[:, 0], "norm").pvalue > 0.01


def test_halfspace_half_normal_mean():
    u = exact_halfspace_conditional(0.0, 100_000, np.random.default_rng(1), dim=3)
    assert np.all(u[:, 0] > 0.0)
    se = math.sqrt(1 - 2 / math.pi) / math.sqrt(u.shape[0])
    assert abs(u[:, 0].mean() - math.sqrt(2 / math.pi)) <= 3 * se
    assert round(math.sqrt(2 / math.pi), 4) == 0.7979
    assert abs(u[:, 1].mean()) < 0.02


@pytest.mark.parametrize("beta", [-2.0, 1.5, 5.0, 12.0])
def test_halfspace_event_holds_everywhere(beta):
    u = exact_halfspace_conditional(beta, 10_000, np.random.default_rng(2))
    assert np.all(u[:, 0] > beta) and np.all(np.isfinite(u))


def test_halfspace_rejects_nan():
    with pytest.raises(ValueError):
        exact_halfspace_conditional(math.nan, 10)


def test_ks_effective_size_widens_critical_value():
    rng = np.random.default_rng(6)
    x, y = rng.standard_normal(2000), rng.standard_normal(2000)
    plain = ks_two_sample(x, y)
    assert plain.passed
    assert plain.critical == pytest.approx(stats.kstwobign.isf(0.01) * math.sqrt(2 / 2000))
    wide = ks_two_sample(x, y, n_eff_x=200)
    assert wide.critical > plain.critical and wide.n_eff == (200.0, 2000.0)
    shifted = ks_two_sample(x + 0.5, y)
    assert not shifted.passed and shifted.pvalue < 1e-6


def test_chi2_truncated_uniform_fit():
    rng = np.random.default_rng(7)
    lo, hi = -0.5, 1.0
    tn = stats.truncnorm(lo, hi)
    x = tn.rvs(5000, random_state=rng)
    res = chi2_truncated(x, stats.norm.cdf, lo, hi)
    assert res.passed(0.01) and res.dof == 9
    # numeric inversion and explicit quantile function give the same bins
    res2 = chi2_truncated(x, stats.norm.cdf, lo, hi, ppf=stats.norm.ppf)
    assert res2.statistic == pytest.approx(res.statistic, rel=1e-9)
    assert chi2_truncated(x, stats.norm.cdf, lo, hi, design_effect=4.0).statistic == pytest.approx(res.statistic / 4)
    skewed = np.clip(x + 0.2, lo + 1e-9, hi - 1e-9)
    assert not chi2_truncated(skewed, stats.norm.cdf, lo, hi).passed(0.01)
    with pytest.raises(ValueError):
        chi2_truncated(np.array([2.0] * 100), stats.norm.cdf, lo, hi)


def test_truncation_radius():
    assert gaussian_truncation_radius(GAUSS, GAUSS.c_max) == 0.0
    assert gaussian_truncation_radius(GAUSS, 0.5 * GAUSS.c_max) == 0.0
    r = gaussian_truncation_radius(GAUSS, 10 * GAUSS.c_max)
    assert r == pytest.approx(0.2 * math.sqrt(2 * math.log(10)))
    # on the boundary c L = 1
    assert 10 * GAUSS.c_max * math.exp(GAUSS.log_likelihood([1.0 + r])) == pytest.approx(1.0)
