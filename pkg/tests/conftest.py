import numpy as np
import pytest

from qmavg.smc import ModelHypothesis

# acceptance criteria register "criterion N: PASS/FAIL ..." lines here
ACCEPTANCE_LINES: dict[int, str] = {}


def coin_model(name="coin", dummy=False):
    """Pr(1 | x) = x with a uniform prior; ``dummy`` adds an ignored parameter."""
    d = 2 if dummy else 1

    def prior(rng, n):
        return rng.uniform(0.0, 1.0, size=(n, d))

    def p_one(_context, particles):
        return np.clip(particles[:, 0], 0.0, 1.0)

    def likelihood(outcome, context, particles):
        p = p_one(context, particles)
        return p if outcome == 1 else 1.0 - p

    def log_likelihood(outcome, context, particles):
        with np.errstate(divide="ignore"):
            return np.log(likelihood(outcome, context, particles))

    return ModelHypothesis(
        name=name,
        dimension=d,
        prior_sampler=prior,
        likelihood=likelihood,
        extractor=lambda particles: particles[:, 0],
        log_likelihood=log_likelihood,
        shot_probability=p_one,
    )


def table_model(values, name="table"):
    """Likelihood read from a fixed per-particle table ``values[outcome]``.

    Particles are the integers ``0..n-1`` so any likelihood vector can be
    imposed exactly.
    """
    values = {k: np.asarray(v, dtype=float) for k, v in values.items()}
    n = len(next(iter(values.values())))

    def prior(rng, m):
        return np.arange(m, dtype=float)[:, None] % n

    def likelihood(outcome, context, particles):
        return values[outcome][particles[:, 0].astype(int)]

    return ModelHypothesis(name=name, dimension=1, prior_sampler=prior, likelihood=likelihood)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
