"""Sequential Monte Carlo over a single model's parameters.

A posterior is represented by a :class:`ParticleCloud`: ``n`` parameter
vectors stored row-wise in an ``(n, d)`` array together with normalized
weights and the running log of the marginal likelihood (evidence).

Model callables are vectorized over particles: likelihoods take the full
``(n, d)`` particle array and return an ``(n,)`` array, extractors return an
array whose leading axis is ``n``.  A single parameter vector can be passed
as a 1-D array through :meth:`ModelHypothesis.likelihood_of`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .errors import InvalidArgumentError, ZeroEvidenceError

# Below this normalizer the weight update is redone in log space.
LOG_SPACE_THRESHOLD = 1e-300
COVARIANCE_JITTER = 1e-12


@dataclass(frozen=True)
class ModelHypothesis:
    """A parametric model: prior, likelihood and estimate extractor.

    Parameters
    ----------
    name
        Identifier used in ensembles and output records.
    dimension
        Number of real parameters ``d``.
    prior_sampler
        ``prior_sampler(rng, n)`` returns an ``(n, d)`` array of prior draws.
    likelihood
        ``likelihood(outcome, context, particles)`` returns the probability of
        ``outcome`` for each row of ``particles``.
    extractor
        Maps particles ``(n, d)`` to estimates with leading axis ``n``.
        Defaults to the identity (the parameter vector itself).
    log_likelihood
        Optional log-space version of ``likelihood``; used when every linear
        likelihood underflows.
    shot_probability
        Optional ``shot_probability(context, particles)``: per-particle success
        probability of one binary shot.  Required by :func:`bayes_update_shots`.
    """

    name: str
    dimension: int
    prior_sampler: Callable[[np.random.Generator, int], np.ndarray]
    likelihood: Callable[[Any, Any, np.ndarray], np.ndarray]
    extractor: Optional[Callable[[np.ndarray], np.ndarray]] = None
    log_likelihood: Optional[Callable[[Any, Any, np.ndarray], np.ndarray]] = None
    shot_probability: Optional[Callable[[Any, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise InvalidArgumentError(f"model dimension must be positive, got {self.dimension}")

    def sample_prior(self, rng: np.random.Generator, n: int) -> np.ndarray:
        draws = np.asarray(self.prior_sampler(rng, n), dtype=float)
        if draws.ndim == 1 and n == 1:
            draws = draws[None, :]
        if draws.shape != (n, self.dimension):
            raise InvalidArgumentError(
                f"prior sampler for {self.name!r} returned shape {draws.shape}, "
                f"expected {(n, self.dimension)}"
            )
        return draws

    def likelihood_of(self, outcome, context, x) -> np.ndarray | float:
        """Evaluate the likelihood for one parameter vector or a batch."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return float(np.asarray(self.likelihood(outcome, context, x[None, :]))[0])
        return np.asarray(self.likelihood(outcome, context, x), dtype=float)

    def log_likelihood_of(self, outcome, context, particles: np.ndarray) -> np.ndarray:
        if self.log_likelihood is not None:
            return np.asarray(self.log_likelihood(outcome, context, particles), dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(self.likelihood(outcome, context, particles), dtype=float))

    def extract(self, particles: np.ndarray) -> np.ndarray:
        if self.extractor is None:
            return particles
        return np.asarray(self.extractor(particles))


@dataclass(frozen=True)
class ParticleCloud:
    """Weighted particle approximation of one model's posterior."""

    particles: np.ndarray
    weights: np.ndarray
    log_evidence: float = 0.0

    def __post_init__(self):
        if self.particles.ndim != 2:
            raise InvalidArgumentError("particles must be a 2-D (n, d) array")
        if self.weights.shape != (self.particles.shape[0],):
            raise InvalidArgumentError("particles and weights must have equal length")
        if self.particles.shape[0] < 1:
            raise InvalidArgumentError("a particle cloud needs at least one particle")

    @property
    def n(self) -> int:
        return self.particles.shape[0]

    @property
    def dimension(self) -> int:
        return self.particles.shape[1]


def init_cloud(model: ModelHypothesis, n: int, rng: np.random.Generator) -> ParticleCloud:
    """Draw ``n`` particles from the model prior with uniform weights."""
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"number of particles must be a positive integer, got {n}")
    particles = model.sample_prior(rng, int(n))
    weights = np.full(int(n), 1.0 / n)
    return ParticleCloud(particles, weights, 0.0)


def bayes_update(
    cloud: ParticleCloud, outcome, context, model: ModelHypothesis
) -> tuple[ParticleCloud, float]:
    """Reweight the cloud by the likelihood of one observation.

    Returns the updated cloud and the normalizer ``sum_j w_j Pr(outcome|x_j)``.
    The cloud's ``log_evidence`` grows by the log of that normalizer; the log
    is exact even when the returned linear normalizer underflows to zero.
    """
    like = np.asarray(model.likelihood(outcome, context, cloud.particles), dtype=float)
    if like.shape != (cloud.n,):
        raise InvalidArgumentError(
            f"likelihood of {model.name!r} returned shape {like.shape}, expected {(cloud.n,)}"
        )
    if np.isnan(like).any() or (like < 0).any():
        raise InvalidArgumentError(f"likelihood of {model.name!r} returned values outside [0, 1]")

    weighted = cloud.weights * like
    normalizer = float(weighted.sum())
    if normalizer >= LOG_SPACE_THRESHOLD:
        new_weights = weighted / normalizer
        log_norm = math.log(normalizer)
    else:
        log_like = model.log_likelihood_of(outcome, context, cloud.particles)
        with np.errstate(divide="ignore"):
            log_w = np.log(cloud.weights) + log_like
        shift = float(np.max(log_w))
        if not np.isfinite(shift):
            raise ZeroEvidenceError(outcome, context, model.name)
        scaled = np.exp(log_w - shift)
        total = float(scaled.sum())
        new_weights = scaled / total
        log_norm = shift + math.log(total)
        normalizer = math.exp(log_norm)

    return ParticleCloud(cloud.particles, new_weights, cloud.log_evidence + log_norm), normalizer


def bayes_update_shots(
    cloud: ParticleCloud,
    model: ModelHypothesis,
    context,
    outcomes,
    policy: "ResamplingPolicy",
    rng: np.random.Generator,
) -> tuple[ParticleCloud, int]:
    """Sequential single-shot updates for binary outcomes (1 = success).

    Equivalent to calling :func:`bayes_update` once per shot followed by the
    resampling policy, but the per-particle shot probabilities are only
    recomputed after a resampling moves the particles.  Returns the final
    cloud and the number of resampling events.
    """
    if model.shot_probability is None:
        raise InvalidArgumentError(f"model {model.name!r} does not define shot probabilities")
    particles, weights, log_ev = cloud.particles, cloud.weights, cloud.log_evidence
    n = particles.shape[0]
    p = np.asarray(model.shot_probability(context, particles), dtype=float)
    resamples = 0
    for outcome in outcomes:
        weighted = weights * (p if outcome else 1.0 - p)
        total = float(weighted.sum())
        if total >= LOG_SPACE_THRESHOLD:
            weights = weighted / total
            log_ev += math.log(total)
        else:
            with np.errstate(divide="ignore"):
                log_w = np.log(weights) + np.log(p if outcome else 1.0 - p)
            shift = float(np.max(log_w))
            if not np.isfinite(shift):
                raise ZeroEvidenceError(int(outcome), context, model.name)
            scaled = np.exp(log_w - shift)
            s = float(scaled.sum())
            weights = scaled / s
            log_ev += shift + math.log(s)
        if 1.0 / float(weights @ weights) < policy.threshold * n:
            resampled = resample_liu_west(ParticleCloud(particles, weights, log_ev), policy.a, rng)
            particles, weights = resampled.particles, resampled.weights
            p = np.asarray(model.shot_probability(context, particles), dtype=float)
            resamples += 1
    return ParticleCloud(particles, weights, log_ev), resamples


def effective_sample_size(cloud: ParticleCloud) -> float:
    return float(1.0 / np.sum(cloud.weights**2))


def weighted_mean_and_covariance(cloud: ParticleCloud) -> tuple[np.ndarray, np.ndarray]:
    mean = cloud.weights @ cloud.particles
    centered = cloud.particles - mean
    cov = (centered * cloud.weights[:, None]).T @ centered
    return mean, 0.5 * (cov + cov.T)


def _cholesky(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(cov + COVARIANCE_JITTER * np.eye(cov.shape[0]))
    except np.linalg.LinAlgError:
        # numerically indefinite beyond the jitter; drop the negative part
        vals, vecs = np.linalg.eigh(cov)
        vals = np.clip(vals, 0.0, None) + COVARIANCE_JITTER
        return vecs * np.sqrt(vals)


def resample_liu_west(
    cloud: ParticleCloud, a: float, rng: np.random.Generator
) -> ParticleCloud:
    """Liu-West resampling.

    Parents are drawn in proportion to weight, shrunk toward the cloud mean by
    ``a`` and perturbed with Gaussian noise of covariance ``(1 - a^2) Sigma``.
    The weighted mean and covariance are preserved in expectation.
    """
    if not 0.0 < a <= 1.0:
        raise InvalidArgumentError(f"Liu-West parameter a must lie in (0, 1], got {a}")
    n, d = cloud.particles.shape
    mean, cov = weighted_mean_and_covariance(cloud)
    idx = rng.choice(n, size=n, p=cloud.weights)
    new = a * cloud.particles[idx] + (1.0 - a) * mean
    if a < 1.0:
        chol = _cholesky(cov)
        new = new + math.sqrt(1.0 - a * a) * (rng.standard_normal((n, d)) @ chol.T)
    return ParticleCloud(new, np.full(n, 1.0 / n), cloud.log_evidence)


@dataclass(frozen=True)
class ResamplingPolicy:
    """When and how to rejuvenate a cloud after an update.

    Resampling fires when ESS falls below ``threshold * n``.  A threshold of 0
    disables resampling.
    """

    threshold: float = 0.5
    a: float = 0.98

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidArgumentError(f"resample threshold must lie in [0, 1], got {self.threshold}")
        if not 0.0 < self.a <= 1.0:
            raise InvalidArgumentError(f"Liu-West parameter a must lie in (0, 1], got {self.a}")

    def should_resample(self, cloud: ParticleCloud) -> bool:
        return effective_sample_size(cloud) < self.threshold * cloud.n

    def apply(self, cloud: ParticleCloud, rng: np.random.Generator) -> ParticleCloud:
        if self.should_resample(cloud):
            return resample_liu_west(cloud, self.a, rng)
        return cloud


NO_RESAMPLING = ResamplingPolicy(threshold=0.0)


def posterior_mean(cloud: ParticleCloud, f: Optional[Callable[[np.ndarray], np.ndarray]] = None):
    """Weighted average ``sum_j w_j f(x_j)``; ``f`` is vectorized over particles.

    Returns a Python float for scalar estimates and an array otherwise.
    """
    values = cloud.particles if f is None else np.asarray(f(cloud.particles))
    if values.shape[:1] != (cloud.n,):
        raise InvalidArgumentError(
            f"estimate function returned leading shape {values.shape[:1]}, expected ({cloud.n},)"
        )
    mean = np.tensordot(cloud.weights, values, axes=(0, 0))
    if mean.ndim == 0:
        return float(mean.real) if not np.iscomplexobj(mean) else complex(mean)
    return mean


def evidence(cloud: ParticleCloud) -> float:
    return math.exp(cloud.log_evidence)


@dataclass
class SMCUpdater:
    """Convenience driver pairing one model with its cloud, rng and policy."""

    model: ModelHypothesis
    cloud: ParticleCloud
    rng: np.random.Generator
    policy: ResamplingPolicy = field(default_factory=ResamplingPolicy)
    resample_count: int = 0

    @classmethod
    def from_prior(cls, model, n, rng, policy=None):
        policy = policy or ResamplingPolicy()
        return cls(model, init_cloud(model, n, rng), rng, policy)

    def update(self, outcome, context) -> float:
        self.cloud, normalizer = bayes_update(self.cloud, outcome, context, self.model)
        if self.policy.should_resample(self.cloud):
            self.cloud = resample_liu_west(self.cloud, self.policy.a, self.rng)
            self.resample_count += 1
        return normalizer

    def mean(self, f=None):
        return posterior_mean(self.cloud, f if f is not None else self.model.extractor)
