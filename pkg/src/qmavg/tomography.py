"""Rank-r state models for Pauli-measurement tomography.

Parameter convention
--------------------
A rank-``r`` model on ``n`` qubits (``D = 2**n``) is parameterized by a
complex ``D x r`` matrix ``X``.  Its real parameter vector is::

    x = concat(Re(vec(X)), Im(vec(X)))

where ``vec`` stacks the columns of ``X`` (column-major).  The vector has
``2 * D * r`` entries and the state is ``rho = X X^dagger / Tr(X X^dagger)``.
Liu-West rejuvenation acts directly on these real coordinates.
"""

from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.stats import binom

from .errors import DegenerateStateError, InvalidArgumentError
from .smc import ModelHypothesis, ParticleCloud, posterior_mean

DENSITY_TOL = 1e-10

_PAULI_1Q = (
    np.array([[1, 0], [0, 1]], dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def pauli_digits(k: int, n_qubits: int) -> list[int]:
    """Base-4 digits ``k_1..k_n`` with ``k = k_1 + 4 k_2 + ... + 4**(n-1) k_n``."""
    if n_qubits < 1:
        raise InvalidArgumentError(f"qubit count must be positive, got {n_qubits}")
    if not 0 <= k < 4**n_qubits:
        raise InvalidArgumentError(f"Pauli index {k} out of range for {n_qubits} qubit(s)")
    return [(k // 4**j) % 4 for j in range(n_qubits)]


@lru_cache(maxsize=None)
def _pauli_cached(k: int, n_qubits: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for digit in pauli_digits(k, n_qubits):
        out = np.kron(out, _PAULI_1Q[digit])
    out.setflags(write=False)
    return out


def pauli(k: int, n_qubits: int) -> np.ndarray:
    """The ``n``-qubit Pauli ``sigma_{k_1} (x) ... (x) sigma_{k_n}``.

    Single-qubit labels are sigma_0 = I, sigma_1 = X, sigma_2 = Y, sigma_3 = Z.
    The returned array is read-only and shared between calls.
    """
    return _pauli_cached(int(k), int(n_qubits))


def params_to_matrix(params: np.ndarray, dim: int) -> np.ndarray:
    """Undo the vec convention; accepts ``(2*D*r,)`` or batched ``(m, 2*D*r)``."""
    params = np.asarray(params, dtype=float)
    batched = params.ndim == 2
    p = params if batched else params[None, :]
    size = p.shape[1]
    if size % (2 * dim):
        raise InvalidArgumentError(f"parameter length {size} is not a multiple of 2*{dim}")
    half = size // 2
    rank = half // dim
    flat = p[:, :half] + 1j * p[:, half:]
    # column-major: the first D entries are column 0
    x = flat.reshape(p.shape[0], rank, dim).transpose(0, 2, 1)
    return x if batched else x[0]


def matrix_to_params(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    flat = x.T.reshape(-1)
    return np.concatenate([flat.real, flat.imag])


def ginibre_state(n_qubits: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    """Parameters of a random rank-``rank`` state: i.i.d. standard normal entries."""
    dim = 2**n_qubits
    if not 1 <= rank <= dim:
        raise InvalidArgumentError(f"rank must lie in [1, {dim}], got {rank}")
    x = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    return matrix_to_params(x)


def ginibre_prior(n_qubits: int, rank: int):
    """Prior sampler ``(rng, n) -> (n, 2*D*r)`` for the rank model."""
    dim = 2**n_qubits
    if not 1 <= rank <= dim:
        raise InvalidArgumentError(f"rank must lie in [1, {dim}], got {rank}")

    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        # every coordinate of vec(X) is an independent N(0, 1)
        return rng.standard_normal((n, 2 * dim * rank))

    return sample


def rho_from_params(params: np.ndarray, dim: int) -> np.ndarray:
    """``X X^dagger / Tr(X X^dagger)``; batched input gives ``(m, D, D)``."""
    x = params_to_matrix(params, dim)
    norms = np.sum(np.abs(x) ** 2, axis=(-2, -1))
    if np.any(norms == 0):
        raise DegenerateStateError("all-zero parameters do not define a state")
    rho = x @ np.conj(np.swapaxes(x, -1, -2))
    return rho / np.asarray(norms)[..., None, None]


def pauli_expectation(params: np.ndarray, k: int, n_qubits: int) -> np.ndarray:
    """``Tr(X X^dagger sigma_k) / Tr(X X^dagger)`` for one or many parameter vectors."""
    dim = 2**n_qubits
    sigma = pauli(k, n_qubits)
    x = params_to_matrix(params, dim)
    norms = np.sum(np.abs(x) ** 2, axis=(-2, -1))
    if np.any(norms == 0):
        raise DegenerateStateError("all-zero parameters do not define a state")
    numer = np.einsum("...ia,ij,...ja->...", np.conj(x), sigma, x).real
    return numer / norms


def pauli_likelihood(params: np.ndarray, k: int, n_qubits: int, outcome: int):
    """Probability of eigenvalue ``outcome`` (+1 or -1) when measuring sigma_k."""
    if outcome not in (1, -1):
        raise InvalidArgumentError(f"Pauli outcome must be +1 or -1, got {outcome}")
    p_plus = np.clip(0.5 * (1.0 + pauli_expectation(params, k, n_qubits)), 0.0, 1.0)
    p = p_plus if outcome == 1 else 1.0 - p_plus
    return float(p) if np.ndim(p) == 0 else p


def spectral_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Largest singular value of ``a - b``.

    Computed as the square root of the top eigenvalue of
    ``(a - b)^dagger (a - b)``.
    """
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or a.ndim != 2:
        raise InvalidArgumentError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    gram = np.conj(diff.T) @ diff
    top = np.linalg.eigvalsh(0.5 * (gram + np.conj(gram.T)))[-1]
    return float(np.sqrt(max(top, 0.0)))


def mean_density_matrix(cloud: ParticleCloud, dim: int) -> np.ndarray:
    """Posterior mean of ``rho`` (averaging states, not parameter vectors)."""
    return posterior_mean(cloud, lambda p: rho_from_params(p, dim))


def check_density_matrix(rho: np.ndarray, tol: float = DENSITY_TOL) -> None:
    """Raise ``ValueError`` unless ``rho`` is Hermitian, unit-trace and PSD within ``tol``."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    if np.max(np.abs(rho - np.conj(rho.T))) > tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ValueError(f"density matrix trace is {np.trace(rho).real}, not 1")
    lam = np.linalg.eigvalsh(0.5 * (rho + np.conj(rho.T)))[0]
    if lam < -tol:
        raise ValueError(f"density matrix has negative eigenvalue {lam}")


def density_matrix_to_json(rho: np.ndarray) -> dict:
    rho = np.asarray(rho, dtype=complex)
    return {
        "dim": int(rho.shape[0]),
        "re": [float(v) for v in rho.real.reshape(-1)],
        "im": [float(v) for v in rho.imag.reshape(-1)],
    }


def density_matrix_from_json(obj: dict) -> np.ndarray:
    dim = int(obj["dim"])
    re = np.asarray(obj["re"], dtype=float)
    im = np.asarray(obj["im"], dtype=float)
    if re.size != dim * dim or im.size != dim * dim:
        raise ValueError(f"expected {dim * dim} entries for a {dim}x{dim} matrix")
    return (re + 1j * im).reshape(dim, dim)


class PauliSetting(NamedTuple):
    """Measurement context: Pauli index and number of repeated shots."""

    index: int
    shots: int = 1


def random_pauli_index(n_qubits: int, rng: np.random.Generator, include_identity: bool = False) -> int:
    low = 0 if include_identity else 1
    return int(rng.integers(low, 4**n_qubits))


def rank_model(n_qubits: int, rank: int) -> ModelHypothesis:
    """Rank-``rank`` model with a Ginibre prior.

    Outcomes are counts of +1 results in ``setting.shots`` repetitions of the
    Pauli ``setting.index``; the likelihood is the binomial mass function.
    The estimate extractor returns each particle's density matrix.
    """
    dim = 2**n_qubits

    def p_plus(setting: PauliSetting, particles: np.ndarray) -> np.ndarray:
        return np.clip(0.5 * (1.0 + pauli_expectation(particles, setting.index, n_qubits)), 0.0, 1.0)

    def likelihood(outcome, setting, particles):
        return binom.pmf(outcome, setting.shots, p_plus(setting, particles))

    def log_likelihood(outcome, setting, particles):
        return binom.logpmf(outcome, setting.shots, p_plus(setting, particles))

    return ModelHypothesis(
        name=f"rank-{rank}",
        dimension=2 * dim * rank,
        prior_sampler=ginibre_prior(n_qubits, rank),
        likelihood=likelihood,
        extractor=lambda particles: rho_from_params(particles, dim),
        log_likelihood=log_likelihood,
        shot_probability=p_plus,
    )
