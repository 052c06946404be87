"""Subset Simulation engine.

The engine only needs a driving function mapping standard-Gaussian states of
shape (m, d) to values of shape (m,). It knows nothing about likelihoods.

Level ``i`` holds N samples conditional on ``{Y > b_i}`` (``b_0 = -inf``)
together with ``log_prob = ln P(Y > b_i)``. For ordinary levels that is
``i ln p0``. Samples are stored chain-major, so ``y.reshape(chains, length)``
recovers the Markov chains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, PlateauError, StalledLevelError
from .mcmc import ChainStats, ProposalSpec, evaluate_batch, run_chains
from .rng import LEVEL_CHAIN, LEVEL_SAMPLE, LEVEL_SHUFFLE, Streams, as_streams

__all__ = [
    "SusConfig",
    "LevelRecord",
    "CcdfCurve",
    "CovEstimate",
    "SusResult",
    "ExceedanceEstimate",
    "run_level_zero",
    "next_threshold",
    "advance_level",
    "assemble_ccdf",
    "estimate_cov",
    "correlation_factor",
    "gamma_from_rho",
    "lineage_design_effect",
    "run_sus",
    "estimate_exceedance",
]


@dataclass(frozen=True)
class SusConfig:
    p0: float = 0.1
    n: int = 1000
    max_levels: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.p0 < 1:
            raise ConfigError(f"level probability p0 must lie in (0, 1), got {self.p0}")
        inv = 1.0 / self.p0
        if abs(inv - round(inv)) > 1e-9 or abs(self.p0 * self.n - round(self.p0 * self.n)) > 1e-9:
            raise ConfigError(f"p0*N and 1/p0 must be positive integers (p0={self.p0}, N={self.n})")
        if self.n < 100:
            raise ConfigError(f"N must be at least 100, got {self.n}")
        if self.max_levels < 1:
            raise ConfigError(f"max_levels must be at least 1, got {self.max_levels}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def n_seeds(self) -> int:
        return int(round(self.p0 * self.n))

    @property
    def chain_length(self) -> int:
        return int(round(1.0 / self.p0))


@dataclass
class LevelRecord:
    index: int
    threshold: float
    u: np.ndarray
    y: np.ndarray
    chain_lengths: tuple
    log_prob: float
    stats: ChainStats = field(default_factory=ChainStats)
    seed_count: int = 0
    gamma: float = float("nan")
    delta: float = float("nan")
    # index of each sample's level-0 ancestor
    root: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return self.stats.acceptance_rate

    def chains(self, values: Optional[np.ndarray] = None) -> list:
        """Split a per-sample array into its chains (list of arrays)."""
        values = self.y if values is None else values
        out, start = [], 0
        for length in self.chain_lengths:
            out.append(values[start:start + length])
            start += length
        return out

    def sorted_y(self) -> np.ndarray:
        return np.sort(self.y, kind="stable")


def run_level_zero(config: SusConfig, driving: Callable, dim: int, rng=None) -> LevelRecord:
    """Direct Monte Carlo: N independent standard-normal states of dimension ``dim``."""
    streams = as_streams(rng if rng is not None else config.seed)
    gen = streams.generator(0, LEVEL_SAMPLE)
    u = gen.standard_normal((config.n, dim))
    y = evaluate_batch(driving, u)
    return LevelRecord(0, -math.inf, u, y, (1,) * config.n, 0.0, root=np.arange(config.n))


def next_threshold(level: LevelRecord, config: SusConfig) -> float:
    """The (p0 N + 1)-th largest Y of ``level``.

    Ties at the threshold between copies of one state (a chain that held its
    position) are resolved by stepping one ulp down so the copies count as
    exceeding it. Ties between distinct states mean the driving variable is
    flat there, which aborts with :class:`PlateauError`. If the copies sit
    so close to the current threshold that it cannot rise at all, the level
    has stalled (:class:`StalledLevelError`).
    """
    y = level.y
    n = y.shape[0]
    ns = int(round(config.p0 * n))
    if ns < 1 or abs(config.p0 * n - ns) > 1e-9:
        raise ValueError(f"level {level.index} holds {n} samples; p0*N must be a positive integer")
    ys = np.sort(y, kind="stable")
    b = float(ys[n - ns - 1])
    n_above = int(np.count_nonzero(y > b))
    if n_above < ns:
        tied = np.flatnonzero(y == b)
        states = level.u[tied]
        if b == -math.inf or not np.all(states == states[0]):
            raise PlateauError(level.index, b, n_above, ns)
        b = float(np.nextafter(b, -math.inf))
        if not b > level.threshold:
            raise StalledLevelError(level.index, level.threshold, np.unique(level.u, axis=0).shape[0])
    return b


def _split_lengths(total: int, parts: int) -> list:
    base, extra = divmod(total, parts)
    return [base + 1] * extra + [base] * (parts - extra)


def advance_level(prev: LevelRecord, config: SusConfig, driving: Callable,
                  proposal: ProposalSpec = ProposalSpec(), rng=None, threads: int = 1,
                  threshold: Optional[float] = None) -> LevelRecord:
    """Generate the next level conditional on ``{Y > b_{i+1}}``.

    By default ``b_{i+1}`` comes from :func:`next_threshold` and the top
    ``p0 N`` samples seed chains of length ``1/p0``. A fixed ``threshold`` may
    be passed instead (used when a target threshold clamps the sequence); then
    every sample above it becomes a seed and chain lengths are split so the
    level still holds N samples.
    """
    streams = as_streams(rng if rng is not None else config.seed)
    level = prev.index + 1
    order = np.argsort(prev.y, kind="stable")
    if threshold is None:
        b = next_threshold(prev, config)
        seed_idx = order[config.n - config.n_seeds:]
        lengths = [config.chain_length] * config.n_seeds
        log_prob = prev.log_prob + math.log(config.p0)
    else:
        b = float(threshold)
        seed_idx = order[prev.y[order] > b]
        if seed_idx.size == 0:
            raise PlateauError(prev.index, b, 0, 1)
        lengths = _split_lengths(config.n, seed_idx.size)
        log_prob = prev.log_prob + math.log(seed_idx.size / prev.n)
    perm = streams.generator(level, LEVEL_SHUFFLE).permutation(seed_idx.size)
    seed_idx = seed_idx[perm]
    seeds_u = prev.u[seed_idx]
    seeds_y = prev.y[seed_idx]

    u_parts, y_parts, stats = [], [], ChainStats()
    # chains of equal length run as one vectorized group
    chain_ids = np.arange(seed_idx.size)
    lengths = np.asarray(lengths)
    for length in sorted(set(lengths.tolist()), reverse=True):
        sel = chain_ids[lengths == length]
        gens = [streams.generator(level, LEVEL_CHAIN, int(c)) for c in sel]
        u_c, y_c, st = run_chains(seeds_u[sel], seeds_y[sel], int(length), b, driving, proposal, gens, threads)
        u_parts.append(u_c.reshape(-1, prev.u.shape[1]))
        y_parts.append(y_c.reshape(-1))
        stats = stats + st
    return LevelRecord(
        index=level,
        threshold=b,
        u=np.concatenate(u_parts),
        y=np.concatenate(y_parts),
        chain_lengths=tuple(int(x) for x in sorted(lengths.tolist(), reverse=True)),
        log_prob=log_prob,
        stats=stats,
        seed_count=int(seed_idx.size),
        root=_roots(prev, seed_idx, lengths),
    )


def _roots(prev: LevelRecord, seed_idx: np.ndarray, lengths: np.ndarray) -> Optional[np.ndarray]:
    if prev.root is None:
        return None
    # chains are stored in descending-length order, matching the loop above
    order = np.argsort(-lengths, kind="stable")
    return np.repeat(prev.root[seed_idx[order]], lengths[order])


def correlation_factor(level: LevelRecord, values: np.ndarray, p0: float) -> float:
    """gamma = 2 sum_{k=1}^{L-1} (1 - k p0) rho(k) for a per-sample sequence.

    ``rho`` is the lag-k autocorrelation pooled over the level's chains, with
    the biased (divide-by-total) normalization and clipped at zero.
    """
    return float(_gamma_many(level, np.asarray(values, dtype=float)[None, :], p0)[0])


def _gamma_many(level: LevelRecord, values: np.ndarray, p0: float) -> np.ndarray:
    # values: (k, N) sequences sharing the level's chain layout
    n = values.shape[1]
    max_len = max(level.chain_lengths)
    if max_len == 1:
        return np.zeros(values.shape[0])
    centered = values - values.mean(axis=1, keepdims=True)
    R = np.zeros((values.shape[0], max_len))
    start = 0
    groups: dict = {}
    for length in level.chain_lengths:
        groups.setdefault(length, []).append(start)
        start += length
    for length, starts in groups.items():
        idx = np.asarray(starts)[:, None] + np.arange(length)[None, :]
        block = centered[:, idx]  # (k, chains, length)
        for lag in range(length):
            R[:, lag] += np.einsum("kct,kct->k", block[:, :, : length - lag], block[:, :, lag:])
    R /= n
    gamma = np.zeros(values.shape[0])
    ok = R[:, 0] > 0
    if not ok.any():
        return gamma
    rho = np.clip(R[ok, 1:] / R[ok, :1], 0.0, None)
    gamma[ok] = gamma_from_rho(rho, p0)
    return gamma


def gamma_from_rho(rho, p0: float):
    """2 sum_k (1 - k p0) rho(k) for lag correlations rho(1), rho(2), ..."""
    rho = np.asarray(rho, dtype=float)
    lags = np.arange(1, rho.shape[-1] + 1)
    weights = np.clip(1.0 - lags * p0, 0.0, None)
    return 2.0 * rho @ weights


def lineage_design_effect(level: LevelRecord, values: np.ndarray) -> np.ndarray:
    """Variance inflation of the sample mean of each row of ``values``.

    Samples that descend from different level-0 samples evolve with
    independent randomness, so lineages act as independent clusters. The
    cluster-robust variance of the mean divided by the i.i.d. variance
    captures correlation both within chains and between sibling chains.
    Returns ones where the level carries no lineage.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if level.root is None:
        return np.ones(values.shape[0])
    n = values.shape[1]
    _, cluster = np.unique(level.root, return_inverse=True)
    centered = values - values.mean(axis=1, keepdims=True)
    sums = np.zeros((values.shape[0], cluster.max() + 1))
    for k in range(values.shape[0]):
        sums[k] = np.bincount(cluster, weights=centered[k], minlength=sums.shape[1])
    iid = (centered**2).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        deff = np.where(iid > 0, (sums**2).sum(axis=1) / iid, 1.0)
    return np.clip(deff, 1.0, n)


@dataclass(frozen=True)
class CovEstimate:
    delta: float
    deltas: tuple
    gammas: tuple


def estimate_cov(levels: Sequence[LevelRecord], config: SusConfig) -> CovEstimate:
    """c.o.v. of ``P(Y > b_m)`` for the last level m, and per-level terms.

    Level i contributes ``((1-p_i)/(p_i N))(1+gamma_i)`` where p_i is the
    fraction of its samples above ``b_{i+1}``. Level 0 has gamma 0. The last
    level has no successor and reports NaN.
    """
    deltas, gammas = [], []
    total = 0.0
    for i, lvl in enumerate(levels):
        if i + 1 >= len(levels):
            deltas.append(float("nan"))
            gammas.append(float("nan"))
            break
        b_next = levels[i + 1].threshold
        ind = (lvl.y > b_next).astype(float)
        p = ind.mean()
        gamma = 0.0 if lvl.index == 0 else correlation_factor(lvl, ind, config.p0)
        d2 = (1.0 - p) / (p * lvl.n) * (1.0 + gamma) if p > 0 else math.inf
        total += d2
        deltas.append(math.sqrt(d2))
        gammas.append(gamma)
    if len(levels) == 1:
        # direct Monte Carlo only: binomial c.o.v. at the level probability
        total = (1.0 - config.p0) / (config.p0 * levels[0].n)
    return CovEstimate(math.sqrt(total), tuple(deltas), tuple(gammas))


def with_cov(levels: Sequence[LevelRecord], config: SusConfig) -> list:
    """Copies of ``levels`` with gamma/delta filled from :func:`estimate_cov`."""
    est = estimate_cov(levels, config)
    return [replace(lvl, gamma=g, delta=d) for lvl, g, d in zip(levels, est.gammas, est.deltas)]


@dataclass(frozen=True)
class CcdfCurve:
    """Pooled estimate of P(Y > b); ``cov`` is the c.o.v. of each point."""

    b: np.ndarray
    p: np.ndarray
    cov: np.ndarray
    level: np.ndarray

    @property
    def ln_p(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.p)

    @property
    def V(self) -> np.ndarray:
        return self.b + self.ln_p

    def __len__(self) -> int:
        return self.b.shape[0]


def _local_cov(level: LevelRecord, thresholds: np.ndarray, p0: float, chunk: int = 256) -> np.ndarray:
    # c.o.v. of the within-level fraction above each threshold
    out = np.empty(thresholds.shape[0])
    for a in range(0, thresholds.shape[0], chunk):
        t = thresholds[a:a + chunk]
        ind = (level.y[None, :] > t[:, None]).astype(float)
        p = ind.mean(axis=1)
        gamma = np.zeros(t.shape[0]) if level.index == 0 else _gamma_many(level, ind, p0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[a:a + chunk] = np.sqrt(np.where(p > 0, (1.0 - p) / (p * level.n) * (1.0 + gamma), np.inf))
    return out


def assemble_ccdf(levels: Sequence[LevelRecord], config: Optional[SusConfig] = None) -> CcdfCurve:
    """Pool the per-level order statistics into one exceedance curve.

    Level i contributes its lower boundary ``(b_i, P_i)`` and, for its sorted
    values ``y_(1) <= ... <= y_(N)``, the points ``(y_(k), P_i (N-k)/N)`` for
    k = 1..N-1, where ``P_i = P(Y > b_i)``. Every level except the last is
    cut at ``b_{i+1}``. Repeated values keep the smallest probability.
    """
    p0 = config.p0 if config is not None else 0.1
    prior_var = 0.0
    bs, ps, covs, lv = [], [], [], []
    for i, lvl in enumerate(levels):
        ys = lvl.sorted_y()
        n = ys.shape[0]
        base = math.exp(lvl.log_prob)
        k = np.arange(1, n)
        b = np.concatenate([[lvl.threshold], ys[:-1]])
        frac = np.concatenate([[1.0], (n - k) / n])
        if i + 1 < len(levels):
            keep = b < levels[i + 1].threshold
            b, frac = b[keep], frac[keep]
        # repeated values: keep the last (smallest probability) entry
        last = np.ones(b.shape[0], dtype=bool)
        last[:-1] = b[1:] != b[:-1]
        b, frac = b[last], frac[last]
        local = np.zeros(b.shape[0])
        inner = frac < 1.0
        if inner.any():
            local[inner] = _local_cov(lvl, b[inner], p0)
        bs.append(b)
        ps.append(base * frac)
        covs.append(np.sqrt(prior_var + local**2))
        lv.append(np.full(b.shape[0], lvl.index))
        if i + 1 < len(levels):
            nxt = levels[i + 1].threshold
            p_next = np.count_nonzero(lvl.y > nxt) / n
            gamma = 0.0 if lvl.index == 0 else correlation_factor(lvl, (lvl.y > nxt).astype(float), p0)
            prior_var += (1.0 - p_next) / (p_next * n) * (1.0 + gamma)
    return CcdfCurve(np.concatenate(bs), np.concatenate(ps), np.concatenate(covs), np.concatenate(lv))


@dataclass
class SusResult:
    levels: list
    ccdf: CcdfCurve
    cov: CovEstimate
    config: SusConfig


def run_sus(driving: Callable, dim: int, config: SusConfig, proposal: ProposalSpec = ProposalSpec(),
            rng=None, threads: int = 1, target: Optional[float] = None) -> SusResult:
    """Plain SuS: climb until ``max_levels`` or until the next threshold passes ``target``."""
    streams = as_streams(rng if rng is not None else config.seed)
    levels = [run_level_zero(config, driving, dim, streams)]
    while len(levels) - 1 < config.max_levels:
        if target is not None and next_threshold(levels[-1], config) >= target:
            break
        levels.append(advance_level(levels[-1], config, driving, proposal, streams, threads))
    levels = with_cov(levels, config)
    return SusResult(levels, assemble_ccdf(levels, config), estimate_cov(levels, config), config)


@dataclass(frozen=True)
class ExceedanceEstimate:
    p: float
    cov: float
    levels: tuple

    @property
    def std(self) -> float:
        return self.p * self.cov if self.p > 0 else 0.0


def estimate_exceedance(driving: Callable, dim: int, target: float, config: SusConfig,
                        proposal: ProposalSpec = ProposalSpec(), rng=None, threads: int = 1) -> ExceedanceEstimate:
    """SuS estimate of ``P(Y > target)`` for a fixed target.

    Levels are added while the adaptive threshold stays below the target, up
    to ``config.max_levels`` conditional levels. If the target is still out of
    reach at the cap, the chains stall below it, or Y is flat at its maximum,
    the estimate is that level's fraction above the target (exactly 0 when
    none exceed it).
    """
    if target == -math.inf:
        return ExceedanceEstimate(1.0, 0.0, ())
    if target == math.inf:
        return ExceedanceEstimate(0.0, 0.0, ())
    streams = as_streams(rng if rng is not None else config.seed)
    levels = [run_level_zero(config, driving, dim, streams)]
    while len(levels) - 1 < config.max_levels:
        try:
            if next_threshold(levels[-1], config) >= target:
                break
        except PlateauError as exc:
            # nothing lies above the tie: either the chains stalled or Y has
            # reached its maximum. Estimate from this level in both cases;
            # a plateau with samples still above it is a genuine abort.
            if exc.n_above > 0:
                raise
            break
        levels.append(advance_level(levels[-1], config, driving, proposal, streams, threads))
    last = levels[-1]
    ind = (last.y > target).astype(float)
    frac = ind.mean()
    p = math.exp(last.log_prob) * frac
    prior = estimate_cov(levels, config)
    var = sum(d * d for d in prior.deltas[:-1])
    if frac > 0:
        gamma = 0.0 if last.index == 0 else correlation_factor(last, ind, config.p0)
        var += (1.0 - frac) / (frac * last.n) * (1.0 + gamma)
        cov = math.sqrt(var)
    else:
        cov = math.inf
    return ExceedanceEstimate(p, cov, tuple(with_cov(levels, config)))
