"""Independent marginal priors and the map from standard Gaussian space.

Sampling happens in an (n+1)-dimensional standard Gaussian space. The first
n coordinates map to physical parameters through ``F_j^{-1}(Phi(u_j))``; the
last coordinate is the auxiliary uniform ``U = Phi(u_{n+1})``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import optimize, special

from .errors import ConfigError, CorruptStateError

__all__ = [
    "StandardNormal",
    "Normal",
    "LogNormal",
    "Uniform",
    "Marginal",
    "PriorSpec",
    "norm_cdf",
    "norm_ppf",
    "to_physical",
    "aux_uniform",
    "log_inv_aux_uniform",
    "lognormal_from_mode_std",
    "sample_prior",
]


def norm_cdf(u):
    return special.ndtr(u)


def norm_ppf(p):
    return special.ndtri(p)


def _upper_tail_to_unit(u, lower, upper):
    # F^{-1}(Phi(u)) for a uniform, evaluated from the nearer tail
    u = np.asarray(u, dtype=float)
    width = upper - lower
    return np.where(u <= 0, lower + width * special.ndtr(u), upper - width * special.ndtr(-u))


@dataclass(frozen=True)
class StandardNormal:
    kind = "standard-normal"

    def from_standard(self, u):
        return np.asarray(u, dtype=float) * 1.0

    def to_standard(self, x):
        return np.asarray(x, dtype=float) * 1.0

    def cdf(self, x):
        return special.ndtr(x)

    def params(self) -> dict:
        return {}


@dataclass(frozen=True)
class Normal:
    mean: float
    std: float
    kind = "normal"

    def __post_init__(self):
        if not (self.std > 0 and math.isfinite(self.std)) or not math.isfinite(self.mean):
            raise ConfigError(f"normal marginal needs finite mean and std > 0, got mean={self.mean}, std={self.std}")

    def from_standard(self, u):
        return self.mean + self.std * np.asarray(u, dtype=float)

    def to_standard(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def cdf(self, x):
        return special.ndtr(self.to_standard(x))

    def params(self) -> dict:
        return {"mean": self.mean, "std": self.std}


@dataclass(frozen=True)
class LogNormal:
    """Lognormal with log-mean ``mu`` and log-std ``sigma``."""

    mu: float
    sigma: float
    kind = "lognormal"

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)) or not math.isfinite(self.mu):
            raise ConfigError(f"lognormal marginal needs finite mu and sigma > 0, got mu={self.mu}, sigma={self.sigma}")

    @classmethod
    def from_mode_std(cls, mode: float, std: float) -> "LogNormal":
        return cls(*lognormal_from_mode_std(mode, std))

    def from_standard(self, u):
        return np.exp(self.mu + self.sigma * np.asarray(u, dtype=float))

    def to_standard(self, x):
        return (np.log(np.asarray(x, dtype=float)) - self.mu) / self.sigma

    def cdf(self, x):
        return special.ndtr(self.to_standard(x))

    @property
    def mode(self) -> float:
        return math.exp(self.mu - self.sigma**2)

    @property
    def std(self) -> float:
        s2 = self.sigma**2
        return math.sqrt(math.expm1(s2) * math.exp(2 * self.mu + s2))

    def params(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class Uniform:
    lower: float
    upper: float
    kind = "uniform"

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper) and self.lower < self.upper):
            raise ConfigError(f"uniform marginal needs finite lower < upper, got [{self.lower}, {self.upper}]")

    def from_standard(self, u):
        return _upper_tail_to_unit(u, self.lower, self.upper)

    def to_standard(self, x):
        x = np.asarray(x, dtype=float)
        width = self.upper - self.lower
        mid = 0.5 * (self.lower + self.upper)
        lo = special.ndtri((x - self.lower) / width)
        hi = -special.ndtri((self.upper - x) / width)
        return np.where(x <= mid, lo, hi)

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.lower) / (self.upper - self.lower), 0.0, 1.0)

    def params(self) -> dict:
        return {"lower": self.lower, "upper": self.upper}


Marginal = Union[StandardNormal, Normal, LogNormal, Uniform]

_KINDS = {"standard-normal": StandardNormal, "normal": Normal, "lognormal": LogNormal, "uniform": Uniform}


def marginal_from_dict(block: dict) -> Marginal:
    """Build a marginal from a config-style mapping (``kind`` plus parameters)."""
    block = dict(block)
    kind = block.pop("kind", None)
    if kind not in _KINDS:
        raise ConfigError(f"unknown marginal kind {kind!r}; expected one of {sorted(_KINDS)}")
    if kind == "lognormal":
        has_log = {"mu", "sigma"} & block.keys()
        has_mode = {"mode", "std"} & block.keys()
        if has_log and has_mode:
            raise ConfigError("lognormal takes either (mu, sigma) or (mode, std), not both")
        if has_mode:
            _require_keys(kind, block, ("mode", "std"))
            return LogNormal.from_mode_std(float(block["mode"]), float(block["std"]))
        _require_keys(kind, block, ("mu", "sigma"))
        return LogNormal(float(block["mu"]), float(block["sigma"]))
    fields = {"standard-normal": (), "normal": ("mean", "std"), "uniform": ("lower", "upper")}[kind]
    _require_keys(kind, block, fields)
    return _KINDS[kind](*(float(block[f]) for f in fields))


def _require_keys(kind: str, block: dict, keys: Sequence[str]) -> None:
    missing = [k for k in keys if k not in block]
    extra = sorted(set(block) - set(keys))
    if missing:
        raise ConfigError(f"{kind} marginal is missing {missing}")
    if extra:
        raise ConfigError(f"{kind} marginal does not accept {extra}")


def marginal_to_dict(m: Marginal) -> dict:
    return {"kind": m.kind, **m.params()}


@dataclass(frozen=True)
class PriorSpec:
    """Product of independent marginals, in parameter order."""

    marginals: tuple

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        if len(self.marginals) < 1:
            raise ConfigError("a prior needs at least one marginal")

    @property
    def dim(self) -> int:
        return len(self.marginals)

    def transform(self, u):
        """Map standard-normal coordinates of shape (..., n) to physical values."""
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {u.shape[-1]}")
        out = np.empty_like(u)
        for j, m in enumerate(self.marginals):
            out[..., j] = m.from_standard(u[..., j])
        return out

    def inverse(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.empty_like(theta)
        for j, m in enumerate(self.marginals):
            out[..., j] = m.to_standard(theta[..., j])
        return out

    @classmethod
    def standard(cls, n: int) -> "PriorSpec":
        return cls(tuple(StandardNormal() for _ in range(n)))


def _check_state(state, prior_dim: int | None = None) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if prior_dim is not None and state.shape[-1] != prior_dim + 1:
        raise ValueError(f"state must have {prior_dim + 1} components, got {state.shape[-1]}")
    if not np.all(np.isfinite(state)):
        raise CorruptStateError("state vector has non-finite components")
    return state


def to_physical(state, prior: PriorSpec) -> np.ndarray:
    """Physical parameters for one state (n+1,) or a batch (m, n+1)."""
    state = _check_state(state, prior.dim)
    return prior.transform(state[..., : prior.dim])


def aux_uniform(state):
    """U = Phi(last coordinate)."""
    state = np.asarray(state, dtype=float)
    return special.ndtr(state[..., -1])


def log_inv_aux_uniform(state):
    """ln(1/U), computed without forming U so the lower tail keeps precision."""
    state = np.asarray(state, dtype=float)
    return -special.log_ndtr(state[..., -1])


def lognormal_from_mode_std(mode: float, std: float) -> tuple[float, float]:
    """Return (mu, sigma) of the lognormal whose mode and standard deviation are given.

    With x = sigma^2 the mode fixes mu = ln(mode) + x and the variance condition
    reduces to mode^2 (e^x - 1) e^{3x} = std^2, whose left side is increasing in x.
    """
    if not (mode > 0 and std > 0 and math.isfinite(mode) and math.isfinite(std)):
        raise ConfigError(f"lognormal mode and std must be positive and finite, got mode={mode}, std={std}")
    target = math.log(std / mode) * 2.0

    def resid(x):
        # log form keeps the bracket well scaled for tiny and large ratios
        return math.log(math.expm1(x)) + 3.0 * x - target

    hi = 1.0
    while resid(hi) < 0:
        hi *= 2.0
    lo = hi
    while resid(lo) > 0:
        lo *= 0.5
    x = optimize.brentq(resid, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.log(mode) + x, math.sqrt(x)


def sample_prior(prior: PriorSpec, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw state vector(s): all n+1 coordinates i.i.d. standard normal."""
    if size is None:
        return rng.standard_normal(prior.dim + 1)
    return rng.standard_normal((size, prior.dim + 1))
