"""Modified Metropolis (independent-component) kernel in standard Gaussian space.

One step: every coordinate gets its own symmetric proposal and a 1-D
Metropolis test against the standard normal density. The assembled candidate
is then kept only if its driving value exceeds the current threshold.

Randomness per step is ``d`` proposal uniforms followed by ``d`` acceptance
uniforms, drawn from the chain's own generator. A chain of length ``L``
therefore consumes exactly ``2 d (L-1)`` doubles, whether it runs alone or
batched with others.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ModelEvaluationError

__all__ = ["ProposalSpec", "ChainStats", "mma_step", "run_chain", "run_chains", "evaluate_batch"]


@dataclass(frozen=True)
class ProposalSpec:
    """Uniform proposal on [u - width, u + width], per coordinate."""

    width: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise ConfigError(f"proposal width must be positive, got {self.width}")


@dataclass(frozen=True)
class ChainStats:
    component_proposals: int = 0
    component_accepts: int = 0
    moved: int = 0
    repeated: int = 0

    @property
    def steps(self) -> int:
        return self.moved + self.repeated

    @property
    def acceptance_rate(self) -> float:
        return self.moved / self.steps if self.steps else float("nan")

    def __add__(self, other: "ChainStats") -> "ChainStats":
        return ChainStats(
            self.component_proposals + other.component_proposals,
            self.component_accepts + other.component_accepts,
            self.moved + other.moved,
            self.repeated + other.repeated,
        )


def evaluate_batch(driving: Callable, u: np.ndarray, index=None) -> np.ndarray:
    """Evaluate the driving variable on rows of ``u``.

    ``index`` maps rows to sample indices for error messages (default: row number).
    """
    if u.shape[0] == 0:
        return np.empty(0)
    index = np.arange(u.shape[0]) if index is None else np.asarray(index)
    try:
        y = np.asarray(driving(u), dtype=float).reshape(u.shape[0])
    except Exception as exc:
        for i, row in enumerate(u):
            try:
                driving(row[None, :])
            except Exception as inner:
                raise ModelEvaluationError(f"model evaluation failed at sample {int(index[i])}: {inner}",
                                           int(index[i])) from inner
        raise ModelEvaluationError(f"model evaluation failed: {exc}") from exc
    bad = np.flatnonzero(np.isnan(y) | (y == np.inf))
    if bad.size:
        i = int(bad[0])
        raise ModelEvaluationError(f"model returned {y[i]} at sample {int(index[i])}", int(index[i]))
    return y


def _propose(u, width, v_prop, v_acc):
    xi = u + width * (2.0 * v_prop - 1.0)
    # accept coordinate with prob min(1, phi(xi)/phi(u)); a step too small
    # to change the double is not a move
    take = (xi != u) & (np.log(v_acc) < 0.5 * (u * u - xi * xi))
    return np.where(take, xi, u), take


def mma_step(current, y_current: float, threshold: float, driving: Callable,
             proposal: ProposalSpec, rng: np.random.Generator):
    """One modified-Metropolis step from a single state.

    Returns ``(next_state, y_next, moved)``. When no coordinate is accepted the
    driving variable is not evaluated and the input state is returned as is.
    """
    current = np.asarray(current, dtype=float)
    d = current.shape[0]
    v_prop = rng.random(d)
    v_acc = rng.random(d)
    cand, take = _propose(current, proposal.width, v_prop, v_acc)
    if not take.any():
        return current, y_current, False
    y_cand = float(evaluate_batch(driving, cand[None, :])[0])
    if y_cand > threshold:
        return cand, y_cand, True
    return current, y_current, False


def run_chain(seed, y_seed: float, length: int, threshold: float, driving: Callable,
              proposal: ProposalSpec, rng: np.random.Generator):
    """Chain of ``length`` states starting at (and including) ``seed``."""
    if length < 1:
        raise ValueError("chain length must be at least 1")
    u, y, stats = run_chains(np.asarray(seed, dtype=float)[None, :], np.array([y_seed]), length,
                             threshold, driving, proposal, [rng])
    return list(zip(u[0], y[0])), stats


def _run_group(seeds, y_seeds, length, threshold, driving, width, rngs, offset):
    n_chains, d = seeds.shape
    u = np.empty((n_chains, length, d))
    y = np.empty((n_chains, length))
    u[:, 0] = seeds
    y[:, 0] = y_seeds
    if length == 1:
        return u, y, ChainStats()
    draws = np.stack([g.random((length - 1, 2, d)) for g in rngs])
    comp_acc = 0
    moved = 0
    cur_u = seeds.copy()
    cur_y = np.asarray(y_seeds, dtype=float).copy()
    for t in range(length - 1):
        cand, take = _propose(cur_u, width, draws[:, t, 0], draws[:, t, 1])
        comp_acc += int(take.sum())
        changed = take.any(axis=1)
        idx = np.flatnonzero(changed)
        if idx.size:
            # sample index within the level: chain-major layout
            y_cand = evaluate_batch(driving, cand[idx], (offset + idx) * length + t + 1)
            ok = y_cand > threshold
            rows = idx[ok]
            cur_u[rows] = cand[rows]
            cur_y[rows] = y_cand[ok]
            moved += int(ok.sum())
        u[:, t + 1] = cur_u
        y[:, t + 1] = cur_y
    steps = n_chains * (length - 1)
    stats = ChainStats(steps * d, comp_acc, moved, steps - moved)
    return u, y, stats


def run_chains(seeds, y_seeds, length: int, threshold: float, driving: Callable,
               proposal: ProposalSpec, rngs: Sequence[np.random.Generator], threads: int = 1):
    """Advance one chain per seed, vectorized across chains.

    Returns arrays of shape (chains, length, d) and (chains, length) plus
    pooled ChainStats. With ``threads > 1`` contiguous blocks of chains run in
    worker threads; the output does not depend on the block split.
    """
    seeds = np.asarray(seeds, dtype=float)
    y_seeds = np.asarray(y_seeds, dtype=float)
    n_chains = seeds.shape[0]
    if len(rngs) != n_chains:
        raise ValueError("need one generator per chain")
    threads = max(1, min(int(threads), n_chains))
    if threads == 1:
        return _run_group(seeds, y_seeds, length, threshold, driving, proposal.width, list(rngs), 0)
    bounds = np.linspace(0, n_chains, threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [
            pool.submit(_run_group, seeds[a:b], y_seeds[a:b], length, threshold, driving,
                        proposal.width, list(rngs[a:b]), int(a))
            for a, b in zip(bounds[:-1], bounds[1:])
        ]
        parts = [f.result() for f in futures]
    u = np.concatenate([p[0] for p in parts])
    y = np.concatenate([p[1] for p in parts])
    stats = ChainStats()
    for p in parts:
        stats = stats + p[2]
    return u, y, stats
