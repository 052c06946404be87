"""Log-likelihood models.

A model is any object with ``dim`` and ``log_likelihood(theta)`` where theta
has shape (m, dim) and the result has shape (m,). Values may be ``-inf`` but
never ``+inf`` or NaN. Models that know their maximum expose ``log_max``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, runtime_checkable

import numpy as np
from scipy import stats

from .errors import ConfigError
from .priors import LogNormal, PriorSpec

__all__ = [
    "LogLikelihoodModel",
    "GaussianConjugate",
    "ShearFrame",
    "ConstantModel",
    "FunctionModel",
    "shear_frequencies",
    "shear_log_likelihood",
    "gaussian_log_likelihood",
    "build_model",
    "shear_default_prior",
]

LN_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@runtime_checkable
class LogLikelihoodModel(Protocol):
    dim: int

    def log_likelihood(self, theta: np.ndarray) -> np.ndarray: ...


def _as_batch(theta, dim: int) -> tuple[np.ndarray, bool]:
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    theta = np.atleast_2d(theta)
    if theta.shape[1] != dim:
        raise ValueError(f"expected parameter vectors of length {dim}, got {theta.shape[1]}")
    return theta, single


@dataclass(frozen=True)
class GaussianConjugate:
    """Independent Gaussian observations of theta with standard-normal priors.

    ``ln L(theta) = sum_j [-ln(s sqrt(2 pi)) - (d_j - theta_j)^2 / (2 s^2)]``.
    Pairs with ``PriorSpec.standard(n)``; the evidence and posterior are then
    available in closed form.
    """

    data: tuple
    noise_std: float
    name: str = field(default="gaussian_conjugate", init=False)

    def __post_init__(self):
        object.__setattr__(self, "data", tuple(float(x) for x in np.atleast_1d(self.data)))
        if not self.noise_std > 0:
            raise ConfigError(f"noise_std must be positive, got {self.noise_std}")
        if len(self.data) < 1:
            raise ConfigError("gaussian_conjugate needs at least one datum")

    @property
    def dim(self) -> int:
        return len(self.data)

    @property
    def log_max(self) -> float:
        return -self.dim * (math.log(self.noise_std) + LN_SQRT_2PI)

    @property
    def c_max(self) -> float:
        return math.exp(-self.log_max)

    def log_likelihood(self, theta):
        theta, single = _as_batch(theta, self.dim)
        out = np.full(theta.shape[0], self.log_max)
        for j, d in enumerate(self.data):
            out -= 0.5 * ((theta[:, j] - d) / self.noise_std) ** 2
        return out[0] if single else out

    def log_evidence(self) -> float:
        var = 1.0 + self.noise_std**2
        return float(sum(stats.norm.logpdf(d, 0.0, math.sqrt(var)) for d in self.data))

    def posterior_mean(self) -> np.ndarray:
        return np.asarray(self.data) / (1.0 + self.noise_std**2)

    def posterior_std(self) -> float:
        s2 = self.noise_std**2
        return math.sqrt(s2 / (1.0 + s2))

    def params(self) -> dict:
        return {"data": list(self.data), "noise_std": self.noise_std}


def gaussian_log_likelihood(theta, spec: GaussianConjugate):
    return spec.log_likelihood(theta)


# nominal values of the two-story shear building
STORY_MASSES = (16.5e3, 16.1e3)
STORY_STIFFNESS = (29.7e6, 29.7e6)
MEASURED_FREQUENCIES = (3.13, 9.83)


@dataclass(frozen=True)
class ShearFrame:
    """Two-DOF shear frame updated from its two natural frequencies.

    theta[0:2] scale the interstory stiffnesses; in the unidentifiable variant
    theta[2:4] also scale the story masses. ``ln L = -J / (2 eps^2)`` with
    ``J = sum_j lam_j^2 (f_j^2 / f~_j^2 - 1)^2``.
    """

    identifiable: bool = True
    masses: tuple = STORY_MASSES
    stiffnesses: tuple = STORY_STIFFNESS
    measured: tuple = MEASURED_FREQUENCIES
    weights: tuple = (1.0, 1.0)
    eps: float = 0.1
    include_normalization: bool = False

    def __post_init__(self):
        for label, values in (("masses", self.masses), ("stiffnesses", self.stiffnesses),
                              ("measured", self.measured), ("weights", self.weights)):
            values = tuple(float(v) for v in values)
            object.__setattr__(self, label, values)
            if len(values) != 2:
                raise ConfigError(f"shear frame {label} needs exactly 2 values")
            if not all(v > 0 and math.isfinite(v) for v in values):
                raise ConfigError(f"shear frame {label} must be positive, got {values}")
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise ConfigError(f"prediction-error std eps must be positive, got {self.eps}")
        if self.measured[0] > self.measured[1]:
            raise ConfigError("measured frequencies must be given in ascending order")

    @property
    def name(self) -> str:
        return "shear_identifiable" if self.identifiable else "shear_unidentifiable"

    @property
    def dim(self) -> int:
        return 2 if self.identifiable else 4

    @property
    def log_normalization(self) -> float:
        if not self.include_normalization:
            return 0.0
        # density of the unweighted misfit e_j, whose std is eps / lam_j
        return -sum(math.log(self.eps / lam) + LN_SQRT_2PI for lam in self.weights)

    @property
    def log_max(self) -> float:
        # an exact fit exists (two parameters, two frequencies), so J = 0 is attained
        return self.log_normalization

    def frequencies(self, theta):
        theta, single = _as_batch(theta, self.dim)
        if np.any(theta <= 0) or not np.all(np.isfinite(theta)):
            raise ValueError("shear frame scalings must be positive and finite")
        k1 = theta[:, 0] * self.stiffnesses[0]
        k2 = theta[:, 1] * self.stiffnesses[1]
        if self.identifiable:
            m1 = np.full_like(k1, self.masses[0])
            m2 = np.full_like(k1, self.masses[1])
        else:
            m1 = theta[:, 2] * self.masses[0]
            m2 = theta[:, 3] * self.masses[1]
        f = _two_dof_frequencies(k1, k2, m1, m2)
        return f[0] if single else f

    def log_likelihood(self, theta):
        theta, single = _as_batch(theta, self.dim)
        f = self.frequencies(theta)
        J = np.zeros(theta.shape[0])
        for j in range(2):
            e = f[:, j] ** 2 / self.measured[j] ** 2 - 1.0
            J += (self.weights[j] * e) ** 2
        out = -J / (2.0 * self.eps**2) + self.log_normalization
        return out[0] if single else out

    def params(self) -> dict:
        return {
            "masses": list(self.masses),
            "stiffnesses": list(self.stiffnesses),
            "measured": list(self.measured),
            "weights": list(self.weights),
            "eps": self.eps,
            "include_normalization": self.include_normalization,
        }


def _two_dof_frequencies(k1, k2, m1, m2) -> np.ndarray:
    # roots of m1 m2 w^4 - (m1 k2 + m2 (k1 + k2)) w^2 + k1 k2 = 0
    a = m1 * m2
    b = m1 * k2 + m2 * (k1 + k2)
    c = k1 * k2
    disc = np.sqrt(np.maximum(b * b - 4.0 * a * c, 0.0))
    big = (b + disc) / (2.0 * a)
    small = c / (a * big)  # Vieta, avoids cancellation in b - disc
    w2 = np.stack([small, big], axis=-1)
    return np.sqrt(w2) / (2.0 * math.pi)


# prior modes and standard deviations of the scaling factors
STIFFNESS_PRIOR = ((1.3, 1.0), (0.8, 1.0))
MASS_PRIOR = ((0.95, 0.1), (0.95, 0.1))


def shear_default_prior(identifiable: bool = True) -> PriorSpec:
    """Independent lognormal priors given by mode and standard deviation."""
    pairs = STIFFNESS_PRIOR if identifiable else STIFFNESS_PRIOR + MASS_PRIOR
    return PriorSpec(tuple(LogNormal.from_mode_std(m, s) for m, s in pairs))


def shear_frequencies(theta, spec: ShearFrame) -> np.ndarray:
    """Natural frequencies (Hz, ascending) for scaling vector(s) theta."""
    return spec.frequencies(theta)


def shear_log_likelihood(theta, spec: ShearFrame):
    return spec.log_likelihood(theta)


@dataclass(frozen=True)
class ConstantModel:
    """L(theta) = exp(value) everywhere; handy for checking the auxiliary variable."""

    dim: int = 1
    value: float = 0.0
    name: str = field(default="constant", init=False)

    @property
    def log_max(self) -> float:
        return self.value

    def log_likelihood(self, theta):
        theta, single = _as_batch(theta, self.dim)
        out = np.full(theta.shape[0], float(self.value))
        return out[0] if single else out

    def params(self) -> dict:
        return {"dim": self.dim, "value": self.value}


@dataclass(frozen=True)
class FunctionModel:
    """Wrap a user callable. With ``vectorized=False`` it is called row by row."""

    func: Callable
    dim: int
    vectorized: bool = False
    log_max: Optional[float] = None
    name: str = "custom"

    def log_likelihood(self, theta):
        theta, single = _as_batch(theta, self.dim)
        if self.vectorized:
            out = np.asarray(self.func(theta), dtype=float).reshape(theta.shape[0])
        else:
            out = np.array([float(self.func(row)) for row in theta])
        return out[0] if single else out


def build_model(name: str, params: dict):
    """Instantiate a built-in model from its config name and parameter block."""
    params = dict(params)
    try:
        if name == "gaussian_conjugate":
            return GaussianConjugate(tuple(params.pop("data")), float(params.pop("noise_std")), **_no_extra(name, params))
        if name in ("shear_identifiable", "shear_unidentifiable"):
            kwargs = {k: params.pop(k) for k in list(params)
                      if k in ("masses", "stiffnesses", "measured", "weights", "eps", "include_normalization")}
            _no_extra(name, params)
            if "weights" in kwargs:
                kwargs["weights"] = tuple(kwargs["weights"])
            return ShearFrame(identifiable=name == "shear_identifiable", **kwargs)
        if name == "constant":
            return ConstantModel(int(params.pop("dim", 1)), float(params.pop("value", 0.0)), **_no_extra(name, params))
    except KeyError as exc:
        raise ConfigError(f"model {name!r} is missing parameter {exc.args[0]!r}") from None
    except TypeError as exc:
        raise ConfigError(f"model {name!r}: {exc}") from None
    raise ConfigError(f"unknown model {name!r}; built-ins are gaussian_conjugate, shear_identifiable, "
                      "shear_unidentifiable, constant")


def _no_extra(name: str, params: dict) -> dict:
    if params:
        raise ConfigError(f"model {name!r} does not accept {sorted(params)}")
    return {}
