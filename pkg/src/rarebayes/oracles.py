"""Brute-force reference samplers and distributional checks.

These are slow but simple and serve as ground truth for the SuS-based
estimators: plain rejection from the prior, the prior mean of the likelihood,
and an exact sampler for a Gaussian half-space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import special, stats

from .errors import ConfigError, RareBayesError
from .priors import PriorSpec

__all__ = [
    "RejectionResult",
    "MonteCarloEvidence",
    "KsResult",
    "ChiSquareResult",
    "RejectionFloorError",
    "rejection_sample",
    "direct_mc_evidence",
    "exact_halfspace_conditional",
    "ks_two_sample",
    "chi2_truncated",
    "gaussian_truncation_radius",
]


class RejectionFloorError(RareBayesError):
    """Acceptance is too rare for plain rejection to be practical."""

    exit_code = 5


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class RejectionResult:
    theta: np.ndarray
    acceptance_rate: float
    draws: int


def rejection_sample(model, prior: PriorSpec, c: float, count: int, rng=None,
                     floor: float = 1e-6, batch: int = 100_000) -> RejectionResult:
    """Draw theta from the prior and U uniform; keep theta when U < c L(theta).

    The test runs in log form, ``ln U < ln c + ln L``, so large multipliers and
    tiny likelihoods do not overflow. Sampling aborts once a one-sided 99%
    upper bound on the acceptance rate drops below ``floor``.
    """
    if not c > 0:
        raise ConfigError(f"multiplier c must be positive, got {c}")
    if count < 1:
        raise ConfigError("count must be at least 1")
    g = _generator(rng)
    log_c = math.log(c)
    kept, n_kept, draws = [], 0, 0
    while n_kept < count:
        u = g.standard_normal((batch, prior.dim))
        log_u = np.log(g.random(batch))
        theta = prior.transform(u)
        ok = log_u < log_c + np.asarray(model.log_likelihood(theta), dtype=float)
        draws += batch
        kept.append(theta[ok])
        n_kept += int(ok.sum())
        if n_kept < count:
            upper = stats.beta.ppf(0.99, n_kept + 1, draws - n_kept) if n_kept < draws else 1.0
            if upper < floor:
                raise RejectionFloorError(
                    f"rejection acceptance rate is below {floor:g} after {draws} draws "
                    f"({n_kept} accepted); use a smaller problem or a larger prediction error"
                )
    theta = np.concatenate(kept)[:count]
    return RejectionResult(theta, n_kept / draws, draws)


@dataclass(frozen=True)
class MonteCarloEvidence:
    p: float
    cov: float

    @property
    def ln_p(self) -> float:
        return math.log(self.p) if self.p > 0 else -math.inf

    @property
    def ln_std(self) -> float:
        # delta method: std(ln P) is the c.o.v. of P
        return self.cov


def direct_mc_evidence(model, prior: PriorSpec, count: int, rng=None) -> MonteCarloEvidence:
    """Prior mean of L(theta) with standard error ``std(L) / sqrt(count)``."""
    if count < 1000:
        raise ConfigError(f"direct Monte Carlo evidence needs at least 1000 draws, got {count}")
    g = _generator(rng)
    log_l = np.asarray(model.log_likelihood(prior.transform(g.standard_normal((count, prior.dim)))), dtype=float)
    if np.all(log_l == -np.inf):
        return MonteCarloEvidence(0.0, math.inf)
    shift = log_l.max()
    w = np.exp(log_l - shift)
    mean = w.mean()
    cov = w.std(ddof=1) / (math.sqrt(count) * mean)
    return MonteCarloEvidence(float(mean * math.exp(shift)), float(cov))


def exact_halfspace_conditional(beta: float, count: int, rng=None, dim: int = 1) -> np.ndarray:
    """Standard-normal vectors of length ``dim`` conditioned on ``u[0] > beta``."""
    if math.isnan(beta) or beta == math.inf:
        raise ValueError(f"beta must be finite or -inf, got {beta}")
    g = _generator(rng)
    out = g.standard_normal((count, dim))
    # inverse CDF on the upper tail: u = -Phi^-1(V Phi(-beta))
    v = g.random(count)
    out[:, 0] = -special.ndtri(v * special.ndtr(-beta))
    return out


@dataclass(frozen=True)
class KsResult:
    statistic: float
    critical: float
    pvalue: float
    n_eff: tuple

    @property
    def passed(self) -> bool:
        return self.statistic <= self.critical


def ks_two_sample(x, y, alpha: float = 0.01, n_eff_x: Optional[float] = None,
                  n_eff_y: Optional[float] = None) -> KsResult:
    """Two-sample Kolmogorov-Smirnov test with optional effective sample sizes.

    MCMC output is autocorrelated, so the plain critical value would reject
    too often. Passing ``n_eff`` (e.g. N / (1 + gamma)) rescales the
    asymptotic critical value ``K_alpha sqrt(1/n + 1/m)`` accordingly.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    d = stats.ks_2samp(x, y).statistic
    nx = float(n_eff_x) if n_eff_x is not None else float(x.size)
    ny = float(n_eff_y) if n_eff_y is not None else float(y.size)
    scale = math.sqrt(1.0 / nx + 1.0 / ny)
    crit = stats.kstwobign.isf(alpha) * scale
    pvalue = float(stats.kstwobign.sf(d / scale))
    return KsResult(float(d), float(crit), pvalue, (nx, ny))


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    pvalue: float
    design_effect: float
    observed: np.ndarray
    expected: np.ndarray

    def passed(self, alpha: float = 0.01) -> bool:
        return self.pvalue >= alpha


def chi2_truncated(x, cdf: Callable, lower: float, upper: float, bins: int = 10,
                   design_effect: float = 1.0, ppf: Optional[Callable] = None) -> ChiSquareResult:
    """Goodness of fit of ``x`` to a distribution truncated to ``(lower, upper)``.

    Bins are equiprobable under the truncated law. The statistic is divided
    by ``design_effect`` (Rao-Scott first-order correction for correlated
    samples) before the chi-square tail is taken.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 5 * bins:
        raise ValueError(f"need at least {5 * bins} samples for {bins} bins, got {x.size}")
    if np.any((x <= lower) | (x >= upper)):
        raise ValueError("samples outside the truncation interval")
    f_lo, f_hi = float(cdf(lower)), float(cdf(upper))
    probs = np.linspace(f_lo, f_hi, bins + 1)
    if ppf is not None:
        edges = np.asarray(ppf(probs), dtype=float)
    else:
        edges = np.array([_invert(cdf, q, lower, upper) for q in probs])
    edges[0], edges[-1] = lower, upper
    observed = np.histogram(x, bins=edges)[0].astype(float)
    expected = np.full(bins, x.size / bins)
    stat = float(((observed - expected) ** 2 / expected).sum()) / max(design_effect, 1.0)
    return ChiSquareResult(stat, bins - 1, float(stats.chi2.sf(stat, bins - 1)), float(max(design_effect, 1.0)),
                           observed, expected)


def _invert(cdf, q, lo, hi):
    from scipy.optimize import brentq

    if q <= cdf(lo):
        return lo
    if q >= cdf(hi):
        return hi
    return brentq(lambda t: cdf(t) - q, lo, hi, xtol=1e-14)


def gaussian_truncation_radius(model, c: float) -> float:
    """Radius of ``B = {c L(theta) > 1}`` for the Gaussian-conjugate model.

    B is the ball ``|theta - d|^2 < 2 s^2 (ln c + ln max L)``; empty (radius 0)
    when ``c <= c_max``.
    """
    excess = math.log(c) + model.log_max
    if excess <= 0:
        return 0.0
    return model.noise_std * math.sqrt(2.0 * excess)
