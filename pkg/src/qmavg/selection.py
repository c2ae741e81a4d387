"""Model posteriors, Bayes factors, model averaging and information criteria.

Sign convention for AIC/BIC: both are *log-likelihood scale* scores where the
larger value is preferred,

    AIC = max log L - d
    BIC = max log L - (d / 2) ln N

i.e. ``-1/2`` times the familiar ``-2 log L + penalty`` forms.  Do not mix
these numbers with tools that report the conventional scale.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, replace
from typing import Any, Callable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import (
    EnsembleZeroEvidenceError,
    InvalidArgumentError,
    InvalidConfigurationError,
    NoSupportError,
    ZeroEvidenceError,
)
from .smc import (
    ModelHypothesis,
    ParticleCloud,
    ResamplingPolicy,
    bayes_update,
    bayes_update_shots,
    init_cloud,
    posterior_mean,
)


@dataclass(frozen=True)
class EnsembleEntry:
    model: ModelHypothesis
    cloud: ParticleCloud
    log_prior: float
    # False once the model assigned zero evidence to some observation
    active: bool = True


class ModelEnsemble:
    """A set of competing models with their particle clouds.

    Model posteriors are never stored; they are derived on demand from the
    log priors and each cloud's accumulated log evidence, so they cannot
    drift from their parts.
    """

    def __init__(self, entries: Sequence[EnsembleEntry]):
        if not entries:
            raise InvalidArgumentError("an ensemble needs at least one model")
        names = [e.model.name for e in entries]
        if len(set(names)) != len(names):
            raise InvalidArgumentError(f"model names must be unique, got {names}")
        self.entries = tuple(entries)

    @classmethod
    def from_models(
        cls,
        models: Sequence[ModelHypothesis],
        n_particles: int,
        rngs: Sequence[np.random.Generator],
        priors: Optional[Sequence[float]] = None,
    ) -> "ModelEnsemble":
        if priors is None:
            log_priors = [-math.log(len(models))] * len(models)
        else:
            total = float(sum(priors))
            if total <= 0 or any(p < 0 for p in priors):
                raise InvalidArgumentError("model priors must be nonnegative with positive sum")
            log_priors = [math.log(p / total) if p > 0 else -math.inf for p in priors]
        entries = [
            EnsembleEntry(m, init_cloud(m, n_particles, rng), lp)
            for m, rng, lp in zip(models, rngs, log_priors)
        ]
        return cls(entries)

    def __len__(self):
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return [e.model.name for e in self.entries]

    def index(self, key) -> int:
        if isinstance(key, (int, np.integer)):
            if not 0 <= key < len(self.entries):
                raise InvalidArgumentError(f"model index {key} out of range")
            return int(key)
        try:
            return self.names.index(key)
        except ValueError:
            raise InvalidArgumentError(f"no model named {key!r}") from None

    @property
    def log_evidences(self) -> np.ndarray:
        return np.array(
            [e.cloud.log_evidence if e.active else -math.inf for e in self.entries]
        )

    @property
    def model_log_posteriors(self) -> np.ndarray:
        unnorm = np.array([e.log_prior for e in self.entries]) + self.log_evidences
        total = logsumexp(unnorm)
        if not np.isfinite(total):
            raise EnsembleZeroEvidenceError("no model in the ensemble has positive probability")
        return unnorm - total

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.model_log_posteriors)

    def posterior_map(self) -> dict[str, float]:
        return dict(zip(self.names, (float(p) for p in self.probabilities)))


def update_ensemble(ensemble: ModelEnsemble, outcome, context) -> ModelEnsemble:
    """Apply one observation to every active model.

    A model that assigns zero evidence is deactivated (probability exactly 0)
    instead of aborting the update; if all models do, the ensemble-level error
    is raised.
    """
    entries = []
    for entry in ensemble.entries:
        if not entry.active:
            entries.append(entry)
            continue
        try:
            cloud, _ = bayes_update(entry.cloud, outcome, context, entry.model)
        except ZeroEvidenceError:
            entries.append(replace(entry, active=False))
        else:
            entries.append(replace(entry, cloud=cloud))
    if not any(e.active for e in entries):
        raise EnsembleZeroEvidenceError(
            f"all models assigned zero evidence to outcome {outcome!r} (context {context!r})"
        )
    return ModelEnsemble(entries)


def update_ensemble_shots(
    ensemble: ModelEnsemble,
    outcomes: Sequence[int],
    context,
    policy: ResamplingPolicy,
    rngs: dict[str, np.random.Generator],
) -> tuple[ModelEnsemble, int]:
    """Shot-by-shot update of every active model with binary ``outcomes``.

    Each model resamples per ``policy`` after any shot.  ``log C(N, k)`` is
    added to every evidence so it equals the probability of the aggregated
    success count, matching a single binomial update of the same data.
    """
    outcomes = [int(o) for o in outcomes]
    n_shots, k = len(outcomes), sum(outcomes)
    log_binom = math.lgamma(n_shots + 1) - math.lgamma(k + 1) - math.lgamma(n_shots - k + 1)
    entries = []
    resamples = 0
    for entry in ensemble.entries:
        if not entry.active:
            entries.append(entry)
            continue
        try:
            cloud, r = bayes_update_shots(
                entry.cloud, entry.model, context, outcomes, policy, rngs[entry.model.name]
            )
        except ZeroEvidenceError:
            entries.append(replace(entry, active=False))
            continue
        resamples += r
        cloud = ParticleCloud(cloud.particles, cloud.weights, cloud.log_evidence + log_binom)
        entries.append(replace(entry, cloud=cloud))
    if not any(e.active for e in entries):
        raise EnsembleZeroEvidenceError(
            f"all models assigned zero evidence to shots under context {context!r}"
        )
    return ModelEnsemble(entries), resamples


def rejuvenate(
    ensemble: ModelEnsemble,
    policy: ResamplingPolicy,
    rngs: dict[str, np.random.Generator],
) -> tuple[ModelEnsemble, int]:
    """Apply the resampling policy to each active model's cloud.

    Returns the new ensemble and how many clouds were resampled.
    """
    entries = []
    count = 0
    for entry in ensemble.entries:
        if entry.active and policy.should_resample(entry.cloud):
            entry = replace(entry, cloud=policy.apply(entry.cloud, rngs[entry.model.name]))
            count += 1
        entries.append(entry)
    return ModelEnsemble(entries), count


def bayes_factor(ensemble: ModelEnsemble, i, j) -> float:
    """Ratio of the evidences of models ``i`` and ``j`` (index or name)."""
    i, j = ensemble.index(i), ensemble.index(j)
    le = ensemble.log_evidences
    if i == j:
        return 1.0
    if le[j] == -math.inf:
        if le[i] == -math.inf:
            warnings.warn(
                f"Bayes factor undefined: models {ensemble.names[i]!r} and "
                f"{ensemble.names[j]!r} both have zero evidence",
                RuntimeWarning,
                stacklevel=2,
            )
            return math.nan
        warnings.warn(
            f"Bayes factor is infinite: model {ensemble.names[j]!r} has zero evidence",
            RuntimeWarning,
            stacklevel=2,
        )
        return math.inf
    return math.exp(le[i] - le[j])


def _estimate_kind(value) -> tuple:
    arr = np.asarray(value)
    return arr.shape, np.iscomplexobj(arr)


def model_average_estimate(ensemble: ModelEnsemble, means: Optional[Sequence] = None):
    """Posterior-probability-weighted average of each model's posterior mean.

    Every model's extractor must produce the same kind of estimate (scalar,
    vector of fixed length, or matrix of fixed shape).  ``means`` may supply
    precomputed per-model posterior means in entry order.
    """
    probs = ensemble.probabilities
    if means is None:
        means = [posterior_mean(e.cloud, e.model.extractor) for e in ensemble.entries]
    elif len(means) != len(ensemble.entries):
        raise InvalidArgumentError("need one posterior mean per model")
    kinds = {_estimate_kind(m)[0] for m in means}
    if len(kinds) != 1:
        raise InvalidConfigurationError(
            f"models produce incompatible estimate shapes: {sorted(map(str, kinds))}"
        )
    total = None
    for p, m in zip(probs, means):
        if p == 0.0:
            continue
        term = m if p == 1.0 else p * np.asarray(m)
        total = term if total is None else total + term
    if np.ndim(total) == 0:
        return float(np.real(total)) if not np.iscomplexobj(total) else complex(total)
    return total


def prune(ensemble: ModelEnsemble, threshold: float) -> ModelEnsemble:
    """Drop models whose posterior probability is below ``threshold``.

    The most probable model always survives.
    """
    if not 0.0 <= threshold < 1.0:
        raise InvalidArgumentError(f"prune threshold must lie in [0, 1), got {threshold}")
    probs = ensemble.probabilities
    best = int(np.argmax(probs))
    keep = [e for k, (e, p) in enumerate(zip(ensemble.entries, probs)) if p >= threshold or k == best]
    if len(keep) == len(ensemble.entries):
        return ensemble
    return ModelEnsemble(keep)


# -- information criteria -------------------------------------------------


def aic(max_log_likelihood: float, d: int) -> float:
    if d < 0:
        raise InvalidArgumentError(f"dimension must be nonnegative, got {d}")
    return max_log_likelihood - d


def bic(max_log_likelihood: float, d: int, n_measurements: int) -> float:
    if d < 0:
        raise InvalidArgumentError(f"dimension must be nonnegative, got {d}")
    if n_measurements < 1:
        raise InvalidArgumentError(f"number of measurements must be at least 1, got {n_measurements}")
    return max_log_likelihood - 0.5 * d * math.log(n_measurements)


@dataclass(frozen=True)
class CriterionScore:
    model_name: str
    max_log_likelihood: float
    dimension: int
    n_measurements: int
    aic: float
    bic: float

    @classmethod
    def from_fit(cls, model_name: str, max_log_likelihood: float, dimension: int, n_measurements: int):
        return cls(
            model_name,
            max_log_likelihood,
            dimension,
            n_measurements,
            aic(max_log_likelihood, dimension),
            bic(max_log_likelihood, dimension, n_measurements),
        )


def _aggregate(data: Sequence[tuple[Any, Any]]) -> list[tuple[Any, Any, int]]:
    """Collapse repeated (outcome, context) pairs into counts when hashable."""
    try:
        counts = Counter((o, c) for o, c in data)
    except TypeError:
        return [(o, c, 1) for o, c in data]
    return [(o, c, k) for (o, c), k in counts.items()]


def total_log_likelihood(model: ModelHypothesis, data, particles: np.ndarray) -> np.ndarray:
    """Sum of log-likelihoods over ``data`` for each particle (rows)."""
    particles = np.atleast_2d(np.asarray(particles, dtype=float))
    total = np.zeros(particles.shape[0])
    for outcome, context, count in _aggregate(data):
        with np.errstate(invalid="ignore"):
            total = total + count * model.log_likelihood_of(outcome, context, particles)
    return np.where(np.isnan(total), -math.inf, total)


MAX_REFINE_EVALUATIONS = 200
MIN_REFINE_STEP = 1e-6


def max_log_likelihood(
    model: ModelHypothesis,
    data: Sequence[tuple[Any, Any]],
    cloud: ParticleCloud,
    initial_step: Optional[float] = None,
) -> tuple[np.ndarray, float]:
    """Approximate ``max_x log Pr(data | x)`` starting from the best particle.

    The best particle is refined by coordinate-wise quadratic probing:
    each coordinate is probed at ``x +/- step`` and at the vertex of the
    parabola through the three values; a sweep with no improvement halves
    the step.  Stops after 200 likelihood evaluations or when the step drops
    below 1e-6.  The result is a local optimum, not a certified maximum.
    """
    if len(data) == 0:
        raise InvalidArgumentError("max_log_likelihood needs at least one observation")
    aggregated = _aggregate(data)

    def _total(x: np.ndarray) -> float:
        acc = 0.0
        for outcome, context, count in aggregated:
            with np.errstate(divide="ignore", invalid="ignore"):
                v = float(model.log_likelihood_of(outcome, context, x[None, :])[0])
            if not v > -math.inf:
                return -math.inf
            acc += count * v
        return acc

    scores = total_log_likelihood(model, data, cloud.particles)
    best = int(np.argmax(scores))
    if not np.isfinite(scores[best]):
        raise NoSupportError(f"no particle of {model.name!r} has finite log-likelihood on the data")

    x = cloud.particles[best].copy()
    fx = _total(x)
    if initial_step is None:
        spread = cloud.particles.std(axis=0)
        spread = spread[spread > 0]
        initial_step = 0.1 * float(np.median(spread)) if spread.size else 0.1
    step = initial_step
    evals = 1
    d = x.size

    while evals < MAX_REFINE_EVALUATIONS and step >= MIN_REFINE_STEP:
        improved = False
        for i in range(d):
            if evals + 2 > MAX_REFINE_EVALUATIONS:
                break
            e = np.zeros(d)
            e[i] = step
            fp, fm = _total(x + e), _total(x - e)
            evals += 2
            candidates = [(fp, x + e), (fm, x - e)]
            curvature = fp - 2.0 * fx + fm
            if np.isfinite(curvature) and curvature < 0 and evals < MAX_REFINE_EVALUATIONS:
                t = 0.5 * step * (fm - fp) / curvature
                if 0 < abs(t) <= 2 * step:
                    xv = x.copy()
                    xv[i] += t
                    candidates.append((_total(xv), xv))
                    evals += 1
            fbest, xbest = max(candidates, key=lambda c: c[0])
            if fbest > fx:
                x, fx = xbest, fbest
                improved = True
        if not improved:
            step *= 0.5
    return x, fx


def run_criteria_report(
    fits: Sequence[tuple[ModelHypothesis, ParticleCloud]],
    data: Sequence[tuple[Any, Any]],
    n_measurements: Optional[int] = None,
) -> list[CriterionScore]:
    """Score each model by approximate max log-likelihood, AIC and BIC.

    ``n_measurements`` defaults to ``len(data)``; pass the shot count when each
    datum aggregates several single-shot measurements.  Rows are sorted by BIC,
    best first.
    """
    if len(data) == 0:
        raise InvalidArgumentError("criteria report needs data")
    n_meas = len(data) if n_measurements is None else n_measurements
    rows = []
    for model, cloud in fits:
        _, value = max_log_likelihood(model, data, cloud)
        rows.append(CriterionScore.from_fit(model.name, value, model.dimension, n_meas))
    return sorted(rows, key=lambda r: r.bic, reverse=True)


def prior_clouds(
    models: Sequence[ModelHypothesis], n: int, rng: np.random.Generator
) -> list[tuple[ModelHypothesis, ParticleCloud]]:
    return [(m, init_cloud(m, n, rng)) for m in models]
