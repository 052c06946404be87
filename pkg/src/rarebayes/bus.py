"""Bayesian updating through Subset Simulation.

The outer run uses ``Y = ln L(theta) + ln(1/U)``. Once a level threshold b
exceeds ``ln max L``, its samples are posterior distributed and
``P_D = e^b P(Y > b)``. Since ``max L`` is unknown, after each outer level an
inner SuS estimates ``a = P_prior(ln L > b)``, the prior mass where the level
is still inadmissible. The run stops at the first level with ``a <= tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, LevelCapError, ModelEvaluationError
from .mcmc import ProposalSpec
from .priors import PriorSpec, log_inv_aux_uniform, to_physical, aux_uniform
from .rng import INNER, OUTER, as_streams
from .sus import (
    CcdfCurve,
    ExceedanceEstimate,
    LevelRecord,
    SusConfig,
    advance_level,
    assemble_ccdf,
    correlation_factor,
    estimate_cov,
    estimate_exceedance,
    lineage_design_effect,
    next_threshold,
    run_level_zero,
    with_cov,
)

__all__ = [
    "BusDriving",
    "LikelihoodDriving",
    "OriginalBusDriving",
    "StoppingConfig",
    "EvidenceEstimate",
    "PosteriorSampleSet",
    "BusResult",
    "OriginalBusResult",
    "TailFit",
    "evaluate_driving",
    "inner_inadmissibility",
    "run_bus",
    "posterior_expectation",
    "run_bus_original",
    "fit_tail_slope",
    "settled_window",
]


@dataclass(frozen=True)
class BusDriving:
    """``Y = ln L(theta(u)) + ln(1/U(u))`` on (n+1)-dimensional states."""

    model: object
    prior: PriorSpec

    def __post_init__(self):
        if self.model.dim != self.prior.dim:
            raise ConfigError(f"model has {self.model.dim} parameters but the prior has {self.prior.dim} marginals")

    @property
    def dim(self) -> int:
        return self.prior.dim + 1

    def __call__(self, u):
        u = np.atleast_2d(u)
        theta = to_physical(u, self.prior)
        return np.asarray(self.model.log_likelihood(theta), dtype=float) + log_inv_aux_uniform(u)


@dataclass(frozen=True)
class LikelihoodDriving:
    """``ln L(theta(u))`` on n-dimensional states; drives the inner runs."""

    model: object
    prior: PriorSpec

    @property
    def dim(self) -> int:
        return self.prior.dim

    def __call__(self, u):
        u = np.atleast_2d(u)
        return np.asarray(self.model.log_likelihood(self.prior.transform(u)), dtype=float)


@dataclass(frozen=True)
class OriginalBusDriving:
    """``Y = c L(theta) - U`` with the target event ``Y > 0``."""

    model: object
    prior: PriorSpec
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigError(f"multiplier c must be positive, got {self.c}")

    @property
    def dim(self) -> int:
        return self.prior.dim + 1

    def __call__(self, u):
        u = np.atleast_2d(u)
        theta = to_physical(u, self.prior)
        log_l = np.asarray(self.model.log_likelihood(theta), dtype=float)
        return self.c * np.exp(log_l) - aux_uniform(u)


def evaluate_driving(state, driving: BusDriving):
    """Y for one state or a batch of states."""
    state = np.asarray(state, dtype=float)
    y = driving(state)
    return float(y[0]) if state.ndim == 1 else y


@dataclass(frozen=True)
class StoppingConfig:
    tol: float = 1e-8
    n_inner: int = 1000
    p0: float = 0.1
    max_levels: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.tol < 1:
            raise ConfigError(f"tol must lie in (0, 1), got {self.tol}")
        if self.max_levels is None:
            cap = math.ceil(math.log(1.0 / self.tol) / math.log(1.0 / self.p0) - 1e-9)
            object.__setattr__(self, "max_levels", max(1, cap))
        if self.max_levels * math.log(1.0 / self.p0) < math.log(1.0 / self.tol) - 1e-9:
            raise ConfigError(
                f"inner level cap {self.max_levels} cannot resolve tol={self.tol} with p0={self.p0}"
            )

    def inner_config(self, seed: int = 0) -> SusConfig:
        return SusConfig(p0=self.p0, n=self.n_inner, max_levels=self.max_levels, seed=seed)


@dataclass(frozen=True)
class EvidenceEstimate:
    stopping_level: int
    b_m: float
    ln_evidence: float
    cov_proxy: float

    @property
    def evidence(self) -> float:
        return math.exp(self.ln_evidence)


@dataclass
class PosteriorSampleSet:
    theta: np.ndarray
    level: int
    b: float
    a: float
    record: Optional[LevelRecord] = None

    def __len__(self) -> int:
        return self.theta.shape[0]

    def design_effect(self, quantiles=np.linspace(0.1, 0.9, 9)) -> np.ndarray:
        """Per-parameter mean design effect of the decile indicators.

        Indicators are what distribution tests (KS, chi-square) are built on,
        so their variance inflation is the relevant one.
        """
        if self.record is None:
            return np.ones(self.theta.shape[1])
        out = np.empty(self.theta.shape[1])
        for j in range(self.theta.shape[1]):
            cuts = np.quantile(self.theta[:, j], quantiles)
            ind = (self.theta[None, :, j] <= cuts[:, None]).astype(float)
            out[j] = lineage_design_effect(self.record, ind).mean()
        return out

    def effective_sample_size(self) -> np.ndarray:
        """Per-parameter N divided by :meth:`design_effect`."""
        return self.theta.shape[0] / self.design_effect()


@dataclass
class BusResult:
    levels: list
    posterior: PosteriorSampleSet
    evidence: EvidenceEstimate
    ccdf: CcdfCurve
    a_sequence: list
    config: SusConfig
    stopping: StoppingConfig

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([lvl.threshold for lvl in self.levels])


def inner_inadmissibility(b_k: float, model, prior: PriorSpec, inner_config: SusConfig,
                          proposal: ProposalSpec = ProposalSpec(), rng=None, threads: int = 1) -> ExceedanceEstimate:
    """Prior probability that ``ln L(theta) > b_k``, by SuS on ``ln L`` alone."""
    driving = LikelihoodDriving(model, prior)
    return estimate_exceedance(driving, prior.dim, b_k, inner_config, proposal, rng, threads)


def _evidence(levels: Sequence[LevelRecord], config: SusConfig) -> EvidenceEstimate:
    last = levels[-1]
    cov = estimate_cov(levels, config)
    var = sum(d * d for d in cov.deltas[:-1])
    return EvidenceEstimate(last.index, last.threshold, last.threshold + last.log_prob, math.sqrt(var))


def run_bus(model, prior: PriorSpec, config: SusConfig, stopping: StoppingConfig = StoppingConfig(),
            proposal: ProposalSpec = ProposalSpec(), rng=None, threads: int = 1) -> BusResult:
    """Outer SuS on ``ln[L/U]`` with the inner/outer stopping rule."""
    streams = as_streams(rng if rng is not None else config.seed)
    outer = streams.child(OUTER)
    driving = BusDriving(model, prior)
    levels = [run_level_zero(config, driving, driving.dim, outer)]
    a_seq: list = []
    inner_cfg = stopping.inner_config(config.seed)
    while True:
        if len(levels) - 1 >= config.max_levels:
            partial = {"levels": with_cov(levels, config), "a_sequence": a_seq,
                       "ccdf": assemble_ccdf(levels, config)}
            last_a = a_seq[-1].p if a_seq else 1.0
            raise LevelCapError(
                f"reached {config.max_levels} levels with a = {last_a:.4e} > tol = {stopping.tol:.1e}",
                partial, last_a,
            )
        levels.append(advance_level(levels[-1], config, driving, proposal, outer, threads))
        k = levels[-1].index
        a_k = inner_inadmissibility(levels[-1].threshold, model, prior, inner_cfg, proposal,
                                    streams.child(INNER, k), threads)
        a_seq.append(a_k)
        if a_k.p <= stopping.tol:
            break
    levels = with_cov(levels, config)
    last = levels[-1]
    theta = to_physical(last.u, prior)
    posterior = PosteriorSampleSet(theta, last.index, last.threshold, a_seq[-1].p, last)
    return BusResult(levels, posterior, _evidence(levels, config), assemble_ccdf(levels, config),
                     a_seq, config, stopping)


def posterior_expectation(samples: PosteriorSampleSet, r: Callable) -> float:
    """Plain average of ``r(theta)`` over the posterior samples."""
    if len(samples) == 0:
        raise ValueError("empty posterior sample set")
    total = 0.0
    for i, theta in enumerate(samples.theta):
        try:
            total += float(r(theta))
        except Exception as exc:
            raise ModelEvaluationError(f"r failed at posterior sample {i}: {exc}", i) from exc
    return total / len(samples)


@dataclass
class OriginalBusResult:
    levels: list
    posterior: PosteriorSampleSet
    ln_evidence: float
    cov: float
    ccdf: CcdfCurve
    c: float


def run_bus_original(model, prior: PriorSpec, c: float, config: SusConfig,
                     proposal: ProposalSpec = ProposalSpec(), rng=None, threads: int = 1) -> OriginalBusResult:
    """SuS on ``Y = c L(theta) - U`` with the fixed target ``Y > 0``.

    Admissibility of ``c`` is deliberately not checked: with ``c L > 1`` on a
    region B the samples there follow the prior instead of the posterior.
    """
    streams = as_streams(rng if rng is not None else config.seed)
    outer = streams.child(OUTER)
    driving = OriginalBusDriving(model, prior, c)
    levels = [run_level_zero(config, driving, driving.dim, outer)]
    while True:
        b = next_threshold(levels[-1], config)
        if b >= 0.0:
            levels.append(advance_level(levels[-1], config, driving, proposal, outer, threads, threshold=0.0))
            break
        if len(levels) - 1 >= config.max_levels:
            raise LevelCapError(f"target Y > 0 not reached within {config.max_levels} levels",
                                {"levels": with_cov(levels, config)})
        levels.append(advance_level(levels[-1], config, driving, proposal, outer, threads))
    levels = with_cov(levels, config)
    last = levels[-1]
    cov = estimate_cov(levels, config)
    var = sum(d * d for d in cov.deltas[:-1])
    posterior = PosteriorSampleSet(to_physical(last.u, prior), last.index, 0.0, float("nan"), last)
    return OriginalBusResult(levels, posterior, last.log_prob - math.log(c), math.sqrt(var),
                             assemble_ccdf(levels, config), c)


@dataclass(frozen=True)
class TailFit:
    slope: float
    intercept: float
    n_points: int

    @property
    def pre_transition(self) -> bool:
        # shallower than unit slope: the window still sits below b_min
        return self.slope > -0.9


def fit_tail_slope(curve: CcdfCurve, window: tuple = (-math.inf, math.inf)) -> TailFit:
    """Least-squares slope of ln P(Y > b) against b over ``lo < b <= hi``."""
    lo, hi = window
    mask = (curve.b > lo) & (curve.b <= hi) & np.isfinite(curve.b) & (curve.p > 0)
    if np.count_nonzero(mask) < 5:
        raise ValueError(f"need at least 5 curve points in window {window}, found {np.count_nonzero(mask)}")
    slope, intercept = np.polyfit(curve.b[mask], curve.ln_p[mask], 1)
    return TailFit(float(slope), float(intercept), int(np.count_nonzero(mask)))


def settled_window(curve: CcdfCurve, b_min: float, max_cov: float = 0.2) -> tuple:
    """``(b_min, hi)`` where hi is the largest curve point above ``b_min`` whose
    estimate is still resolved (point c.o.v. at most ``max_cov``)."""
    ok = (curve.b > b_min) & (curve.cov <= max_cov) & np.isfinite(curve.b)
    if not ok.any():
        raise ValueError(f"no resolved curve points above b = {b_min}")
    return b_min, float(curve.b[ok].max())
