"""Randomized-benchmarking decay models and their Gaussian priors.

Zeroth order:  Pr(survive | m) = A0 p^m + B0
First order:   Pr(survive | m) = A1 p^m + B1 + C1 (m - 1)(q1 - p^2) p^(m - 2)

Parameter vectors are ordered ``(p, A0, B0)`` and ``(p, A1, B1, C1, q1)``.
Survival values are not constrained by the priors; they are clipped to
``[1e-9, 1 - 1e-9]`` when turned into outcome probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.stats import binom

from .errors import InvalidArgumentError
from .smc import ModelHypothesis

CLIP_EPS = 1e-9

ZEROTH_PRIOR_MEAN = (0.95, 0.3, 0.5)
FIRST_PRIOR_MEANS = {
    "I": (0.95, 0.3, 0.5, 0.03, 0.95),
    "II": (0.95, 0.3, 0.5, 0.02, 0.92),
}
# Interpreted as a variance by default: only that reading gives a divergence
# of 0.050 between the two first-order priors.
DEFAULT_PRIOR_SCALE = 0.01


class RB0Params(NamedTuple):
    p: float
    A0: float
    B0: float


class RB1Params(NamedTuple):
    p: float
    A1: float
    B1: float
    C1: float
    q1: float


def _columns(params, width: int):
    arr = np.asarray(params, dtype=float)
    if arr.shape[-1] != width:
        raise InvalidArgumentError(f"expected {width} parameters, got shape {arr.shape}")
    return [arr[..., i] for i in range(width)]


def _check_length(m, minimum: int):
    m_arr = np.asarray(m)
    if np.any(m_arr < minimum) or np.any(m_arr != np.floor(m_arr)):
        raise InvalidArgumentError(f"sequence length must be an integer >= {minimum}, got {m}")
    return m_arr


def rb0_survival(params, m):
    """``A0 p^m + B0``, unclipped.  ``params`` may be ``(..., 3)``."""
    _check_length(m, 0)
    p, a0, b0 = _columns(params, 3)
    out = a0 * p**m + b0
    return float(out) if np.ndim(out) == 0 else out


def rb1_survival(params, m):
    """First-order survival, unclipped.  The correction term is exactly 0 at ``m = 1``."""
    m_arr = _check_length(m, 1)
    p, a1, b1, c1, q1 = _columns(params, 5)
    base = a1 * p**m + b1
    if np.all(m_arr == 1):
        out = base + 0.0 * p
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            corr = c1 * (m - 1) * (q1 - p**2) * p ** (m - 2.0)
        out = base + np.where(m_arr == 1, 0.0, corr)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class ClipStats:
    """Running count of survival values that had to be clipped."""

    count: int = 0


def clip_survival(survival, stats: Optional[ClipStats] = None):
    s = np.asarray(survival, dtype=float)
    clipped = np.clip(s, CLIP_EPS, 1.0 - CLIP_EPS)
    if stats is not None:
        stats.count += int(np.count_nonzero(clipped != s))
    return clipped


def rb_likelihood(survival, outcome: int, stats: Optional[ClipStats] = None):
    """Single-shot probability of ``outcome`` (0 = survived, 1 = not)."""
    if outcome not in (0, 1):
        raise InvalidArgumentError(f"RB outcome must be 0 or 1, got {outcome}")
    s = clip_survival(survival, stats)
    out = s if outcome == 0 else 1.0 - s
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GaussianPriorSpec:
    """Isotropic normal prior: ``N(mean, variance * I)``."""

    mean: tuple
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise InvalidArgumentError(f"prior variance must be positive, got {self.variance}")
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))

    @classmethod
    def from_scale(cls, mean, scale: float, convention: str = "variance"):
        """Build from a scale that is either a variance or a standard deviation."""
        if convention == "variance":
            return cls(mean, scale)
        if convention == "stddev":
            return cls(mean, scale * scale)
        raise InvalidArgumentError(f"prior scale convention must be 'variance' or 'stddev', got {convention!r}")

    @property
    def dimension(self) -> int:
        return len(self.mean)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.asarray(self.mean) + np.sqrt(self.variance) * rng.standard_normal((n, self.dimension))


def gaussian_kl(a: GaussianPriorSpec, b: GaussianPriorSpec) -> float:
    """KL divergence between isotropic normals of equal variance."""
    if a.dimension != b.dimension:
        raise InvalidArgumentError(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    if a.variance != b.variance:
        raise InvalidArgumentError("gaussian_kl only handles equal isotropic variances")
    diff = np.subtract(a.mean, b.mean)
    return float(diff @ diff / (2.0 * a.variance))


class RBSetting(NamedTuple):
    """Measurement context: sequence length and number of repetitions."""

    length: int
    shots: int = 1


def prior_for(order: str, prior_set: str = "I", scale: float = DEFAULT_PRIOR_SCALE,
              convention: str = "variance") -> GaussianPriorSpec:
    if order == "zeroth":
        return GaussianPriorSpec.from_scale(ZEROTH_PRIOR_MEAN, scale, convention)
    if order == "first":
        try:
            mean = FIRST_PRIOR_MEANS[prior_set]
        except KeyError:
            raise InvalidArgumentError(f"unknown prior set {prior_set!r}; expected 'I' or 'II'") from None
        return GaussianPriorSpec.from_scale(mean, scale, convention)
    raise InvalidArgumentError(f"unknown RB model order {order!r}; expected 'zeroth' or 'first'")


def survival_function(order: str):
    if order == "zeroth":
        return rb0_survival
    if order == "first":
        return rb1_survival
    raise InvalidArgumentError(f"unknown RB model order {order!r}")


def rb_model(order: str, prior: GaussianPriorSpec, stats: Optional[ClipStats] = None,
             name: Optional[str] = None) -> ModelHypothesis:
    """RB decay model with a Gaussian prior and binomial batch likelihood.

    Outcomes are survival counts out of ``setting.shots`` repetitions at
    sequence length ``setting.length``.  The extractor returns ``p``.
    """
    survival = survival_function(order)
    width = 3 if order == "zeroth" else 5
    if prior.dimension != width:
        raise InvalidArgumentError(f"{order}-order model needs a {width}-dimensional prior")

    def per_shot(setting: RBSetting, particles: np.ndarray) -> np.ndarray:
        return clip_survival(survival(particles, setting.length), stats)

    def likelihood(outcome, setting, particles):
        return binom.pmf(outcome, setting.shots, per_shot(setting, particles))

    def log_likelihood(outcome, setting, particles):
        return binom.logpmf(outcome, setting.shots, per_shot(setting, particles))

    return ModelHypothesis(
        name=name or order,
        dimension=width,
        prior_sampler=prior.sample,
        likelihood=likelihood,
        extractor=lambda particles: particles[:, 0],
        log_likelihood=log_likelihood,
        shot_probability=per_shot,
    )
