"""Simulated experiments, trial records and summary statistics.

Every trial owns independent random streams derived from the root seed:
stream 0 of trial ``t`` drives the true state and simulated data, stream
``k + 1`` drives model ``k``'s prior draws and resampling.  Results therefore
do not depend on how trials are scheduled across workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np

from . import rb, tomography
from .config import ExperimentConfig
from .errors import EnsembleZeroEvidenceError, InvalidArgumentError
from .selection import (
    ModelEnsemble,
    model_average_estimate,
    prune,
    rejuvenate,
    run_criteria_report,
    update_ensemble,
    update_ensemble_shots,
)
from .smc import ResamplingPolicy, posterior_mean

SCHEMA_VERSION = 1
# models use streams 1..K; keep the shot-order stream clear of them
SHOT_ORDER_STREAM = 2**20
STATISTICS = ("median", "q1", "q3")


def trial_rng(seed: int, trial_id: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial_id, stream)))


def simulate_outcome(true_likelihood: Callable[[Any], float], context, shots: int,
                     rng: np.random.Generator) -> int:
    """Number of successes in ``shots`` repetitions with probability ``true_likelihood(context)``."""
    if shots < 1:
        raise InvalidArgumentError(f"shots must be at least 1, got {shots}")
    p = float(true_likelihood(context))
    if not 0.0 <= p <= 1.0:
        raise InvalidArgumentError(f"success probability {p} outside [0, 1]")
    return int(rng.binomial(shots, p))


@dataclass
class TrialState:
    """Mutable per-trial bookkeeping shared by both experiment types."""

    ensemble: ModelEnsemble
    all_names: list[str]
    rngs: dict[str, np.random.Generator]
    policy: ResamplingPolicy
    prune_threshold: float
    data: list
    frozen_error: dict[str, float]
    frozen_log_evidence: dict[str, Optional[float]]
    shot_order_rng: np.random.Generator
    per_shot: bool = True
    shots_so_far: int = 0
    resamples: int = 0

    def observe(self, count: int, setting) -> None:
        """Update with ``count`` successes out of ``setting.shots``.

        Per-shot mode replays the count as a randomly ordered sequence of
        single shots with a resampling check after each; otherwise one
        binomial update is followed by one resampling check.
        """
        if self.per_shot:
            outcomes = np.zeros(setting.shots, dtype=np.int8)
            outcomes[:count] = 1
            self.shot_order_rng.shuffle(outcomes)
            self.ensemble, n = update_ensemble_shots(
                self.ensemble, outcomes, setting._replace(shots=1), self.policy, self.rngs
            )
        else:
            self.ensemble = update_ensemble(self.ensemble, count, setting)
            self.ensemble, n = rejuvenate(self.ensemble, self.policy, self.rngs)
        self.resamples += n
        self.data.append((count, setting))
        self.shots_so_far += setting.shots

    def maybe_prune(self) -> None:
        if self.prune_threshold > 0:
            self.ensemble = prune(self.ensemble, self.prune_threshold)


def _build_state(models, config: ExperimentConfig, trial_id: int) -> TrialState:
    rngs = {m.name: trial_rng(config.seed, trial_id, k + 1) for k, m in enumerate(models)}
    ensemble = ModelEnsemble.from_models(models, config.particles_per_model, [rngs[m.name] for m in models])
    return TrialState(
        ensemble=ensemble,
        all_names=[m.name for m in models],
        rngs=rngs,
        policy=ResamplingPolicy(config.resample_threshold, config.liu_west_a),
        prune_threshold=config.prune_threshold,
        data=[],
        frozen_error={},
        frozen_log_evidence={},
        shot_order_rng=trial_rng(config.seed, trial_id, SHOT_ORDER_STREAM),
        per_shot=config.per_shot_updates,
    )


def _finite_or_none(x: float) -> Optional[float]:
    return float(x) if math.isfinite(x) else None


def _record(config: ExperimentConfig, state: TrialState, trial_id: int, step: int,
            errors: dict[str, float], mae_error: float, started: float, extra: dict) -> dict:
    probs = state.ensemble.posterior_map()
    log_ev = dict(zip(state.ensemble.names, state.ensemble.log_evidences))
    for name in state.all_names:
        if name in errors:
            state.frozen_error[name] = errors[name]
        if name in log_ev:
            state.frozen_log_evidence[name] = _finite_or_none(log_ev[name])
    return {
        "schema": SCHEMA_VERSION,
        "experiment": config.experiment,
        "trial_id": trial_id,
        "step_index": step,
        "status": "ok",
        "cumulative_shots": state.shots_so_far,
        "model_posteriors": {n: probs.get(n, 0.0) for n in state.all_names},
        "per_model_error": {n: state.frozen_error.get(n) for n in state.all_names},
        "mae_error": mae_error,
        "evidence_log": {n: state.frozen_log_evidence.get(n) for n in state.all_names},
        **extra,
        "resamples": state.resamples,
        "wall_time_ms": round((time.perf_counter() - started) * 1000.0, 3) if config.record_timing else None,
    }


def _failure(config: ExperimentConfig, trial_id: int, step: int, exc: Exception) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "experiment": config.experiment,
        "trial_id": trial_id,
        "step_index": step,
        "status": "failed",
        "error": str(exc),
    }


def _estimates(state: TrialState) -> tuple[dict[str, Any], Any]:
    means = {e.model.name: posterior_mean(e.cloud, e.model.extractor) for e in state.ensemble.entries}
    mae = model_average_estimate(state.ensemble, means=list(means.values()))
    return means, mae


def tomography_trial(config: ExperimentConfig, trial_id: int, keep: Optional[dict] = None) -> list[dict]:
    n = config.qubits
    dim = 2**n
    data_rng = trial_rng(config.seed, trial_id, 0)
    rho_true = tomography.rho_from_params(tomography.ginibre_state(n, config.true_rank, data_rng), dim)
    models = [tomography.rank_model(n, r) for r in config.ranks]
    state = _build_state(models, config, trial_id)
    true_name = f"rank-{config.true_rank}"
    records = []
    for step in range(config.batches):
        started = time.perf_counter()
        k = tomography.random_pauli_index(n, data_rng, config.include_identity)
        p_plus = float(np.clip(0.5 * (1.0 + np.trace(rho_true @ tomography.pauli(k, n)).real), 0.0, 1.0))
        setting = tomography.PauliSetting(k, config.shots_per_batch)
        count = simulate_outcome(lambda _: p_plus, setting, config.shots_per_batch, data_rng)
        try:
            state.observe(count, setting)
        except EnsembleZeroEvidenceError as exc:
            records.append(_failure(config, trial_id, step, exc))
            break
        means, mae = _estimates(state)
        errors = {name: tomography.spectral_distance(rho, rho_true) for name, rho in means.items()}
        records.append(_record(
            config, state, trial_id, step, errors, tomography.spectral_distance(mae, rho_true), started,
            {"true_model": true_name, "measurement": {"pauli": k}, "clip_count": None},
        ))
        state.maybe_prune()
    if keep is not None:
        keep.update(state=state, models=models)
    return records


def rb_trial(config: ExperimentConfig, trial_id: int, keep: Optional[dict] = None) -> list[dict]:
    data_rng = trial_rng(config.seed, trial_id, 0)
    scale, conv = config.prior_scale, config.prior_scale_convention
    true_prior = rb.prior_for(config.rb_true_model, config.rb_prior_set, scale, conv)
    x_true = true_prior.sample(data_rng, 1)[0]
    true_survival = rb.survival_function(config.rb_true_model)
    p_true = float(x_true[0])

    stats = rb.ClipStats()
    models = [
        rb.rb_model("zeroth", rb.prior_for("zeroth", scale=scale, convention=conv), stats),
        rb.rb_model("first", rb.prior_for("first", config.rb_prior_set, scale, conv), stats),
    ]
    state = _build_state(models, config, trial_id)
    lengths = sorted(config.sequence_lengths)
    reps = config.repetitions_per_length
    records = []
    for step in range(config.batches):
        started = time.perf_counter()
        try:
            for m in lengths:
                s = float(rb.clip_survival(true_survival(x_true, m)))
                setting = rb.RBSetting(m, reps)
                state.observe(simulate_outcome(lambda _: s, setting, reps, data_rng), setting)
        except EnsembleZeroEvidenceError as exc:
            records.append(_failure(config, trial_id, step, exc))
            break
        means, mae = _estimates(state)
        errors = {name: abs(float(p) - p_true) for name, p in means.items()}
        records.append(_record(
            config, state, trial_id, step, errors, abs(float(mae) - p_true), started,
            {"true_model": config.rb_true_model, "measurement": {"sweep_lengths": lengths},
             "clip_count": stats.count},
        ))
        state.maybe_prune()
    if keep is not None:
        keep.update(state=state, models=models)
    return records


TRIAL_RUNNERS = {"tomography": tomography_trial, "rb": rb_trial}


def _run_one(args) -> list[dict]:
    config, trial_id = args
    return TRIAL_RUNNERS[config.experiment](config, trial_id)


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> list[dict]:
    """Run all trials; records come back ordered by (trial_id, step_index)."""
    config.validate()
    workers = config.workers if workers is None else workers
    jobs = [(config, t) for t in range(config.trials)]
    if workers <= 1:
        chunks = [_run_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_one, jobs))
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r["trial_id"], r["step_index"]))
    return records


def run_tomography_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> list[dict]:
    if config.experiment != "tomography":
        raise InvalidArgumentError("configuration is not a tomography experiment")
    return run_experiment(config, workers)


def run_rb_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> list[dict]:
    if config.experiment != "rb":
        raise InvalidArgumentError("configuration is not an RB experiment")
    return run_experiment(config, workers)


def criteria_for_config(config: ExperimentConfig):
    """Simulate trial 0 of ``config`` and score its models by AIC/BIC.

    Each model's maximum-likelihood search starts from its final posterior
    cloud.  ``N`` is the total number of single-shot measurements.
    """
    config.validate()
    keep: dict = {}
    TRIAL_RUNNERS[config.experiment](config, 0, keep)
    state: TrialState = keep["state"]
    fits = [(e.model, e.cloud) for e in state.ensemble.entries]
    return run_criteria_report(fits, state.data, n_measurements=state.shots_so_far)


# -- persistence ------------------------------------------------------------


def dumps_records(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, allow_nan=False) + "\n" for r in records)


def write_jsonl(records: Iterable[dict], path: str | Path) -> None:
    Path(path).write_text(dumps_records(records), encoding="utf-8")


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# -- summaries --------------------------------------------------------------


@dataclass(frozen=True)
class SummaryRow:
    step_index: int
    statistic: str
    values: dict[str, float]


def _series(record: dict) -> dict[str, float]:
    out = {}
    for name, p in record.get("model_posteriors", {}).items():
        out[f"posterior[{name}]"] = p
    for name, e in record.get("per_model_error", {}).items():
        if e is not None:
            out[f"error[{name}]"] = e
    if record.get("mae_error") is not None:
        out["mae_error"] = record["mae_error"]
    return out


def summarize(records: Sequence[dict]) -> list[SummaryRow]:
    """Median and quartiles of every series, grouped by step index.

    Quartiles use linear interpolation between order statistics (numpy's
    default ``linear`` method), so ``{1, 2, 3, 4, 5}`` gives q1 = 2, q3 = 4.
    Failure rows are skipped.
    """
    ok = [r for r in records if r.get("status", "ok") == "ok"]
    if not ok:
        raise InvalidArgumentError("summarize needs at least one successful record")
    grouped: dict[int, dict[str, list[float]]] = {}
    for r in ok:
        bucket = grouped.setdefault(int(r["step_index"]), {})
        for key, value in _series(r).items():
            bucket.setdefault(key, []).append(float(value))
    names = sorted({k for bucket in grouped.values() for k in bucket})
    rows = []
    for step in sorted(grouped):
        bucket = grouped[step]
        stats = {}
        for key in names:
            # sort first so the result cannot depend on record order
            vals = np.sort(np.asarray(bucket.get(key, []), dtype=float))
            if vals.size:
                q1, med, q3 = np.quantile(vals, [0.25, 0.5, 0.75])
            else:
                q1 = med = q3 = math.nan
            stats[key] = {"median": float(med), "q1": float(q1), "q3": float(q3)}
        for stat in STATISTICS:
            rows.append(SummaryRow(step, stat, {k: stats[k][stat] for k in names}))
    return rows


def summary_csv(rows: Sequence[SummaryRow]) -> str:
    names = list(rows[0].values) if rows else []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step_index", "statistic", *names])
    for row in rows:
        writer.writerow([row.step_index, row.statistic, *(repr(row.values[n]) for n in names)])
    return buf.getvalue()


def criteria_csv(scores) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "max_log_likelihood", "dimension", "n_measurements", "aic", "bic"])
    for s in scores:
        writer.writerow([s.model_name, repr(s.max_log_likelihood), s.dimension, s.n_measurements,
                         repr(s.aic), repr(s.bic)])
    return buf.getvalue()
