import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmavg.errors import DegenerateStateError, InvalidArgumentError
from qmavg.selection import EnsembleEntry, ModelEnsemble, model_average_estimate
from qmavg.smc import ParticleCloud, init_cloud
from qmavg.tomography import (
    PauliSetting,
    check_density_matrix,
    density_matrix_from_json,
    density_matrix_to_json,
    ginibre_state,
    matrix_to_params,
    mean_density_matrix,
    pauli,
    pauli_digits,
    pauli_expectation,
    pauli_likelihood,
    random_pauli_index,
    rank_model,
    rho_from_params,
    spectral_distance,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)


def rand_rho(rng, dim):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


class TestPauli:
    def test_identity(self):
        np.testing.assert_array_equal(pauli(0, 1), np.eye(2))

    def test_sigma_z(self):
        np.testing.assert_array_equal(pauli(3, 1), Z)

    def test_two_qubit_digits(self):
        np.testing.assert_array_equal(pauli(5, 2), np.kron(X, X))
        # k = 2 + 4*3: sigma_2 on the left factor, sigma_3 on the right
        np.testing.assert_array_equal(pauli(14, 2), np.kron(Y, Z))

    @given(st.integers(1, 4), st.data())
    def test_digit_roundtrip(self, n, data):
        k = data.draw(st.integers(0, 4**n - 1))
        digits = pauli_digits(k, n)
        assert sum(d * 4**j for j, d in enumerate(digits)) == k

    @pytest.mark.parametrize("k, n", [(-1, 1), (4, 1), (16, 2)])
    def test_out_of_range(self, k, n):
        with pytest.raises(InvalidArgumentError):
            pauli(k, n)

    def test_read_only(self):
        with pytest.raises(ValueError):
            pauli(1, 1)[0, 0] = 5


class TestStates:
    def test_basis_column(self):
        np.testing.assert_allclose(rho_from_params(matrix_to_params(np.array([[1], [0]])), 2), np.diag([1, 0]))

    def test_identity_matrix(self):
        np.testing.assert_allclose(rho_from_params(matrix_to_params(np.eye(2)), 2), np.eye(2) / 2)

    def test_vec_convention(self):
        x = np.array([[1 + 2j, 3 + 4j], [5 + 6j, 7 + 8j]])
        # column-major: column 0 first; all real parts before imaginary parts
        np.testing.assert_array_equal(matrix_to_params(x), [1, 5, 3, 7, 2, 6, 4, 8])

    @given(st.floats(0.01, 100) | st.floats(-100, -0.01))
    @settings(max_examples=30)
    def test_scale_invariance(self, c):
        x = ginibre_state(2, 2, np.random.default_rng(5))
        np.testing.assert_allclose(rho_from_params(c * x, 4), rho_from_params(x, 4), atol=1e-12)

    def test_zero_params(self):
        with pytest.raises(DegenerateStateError):
            rho_from_params(np.zeros(4), 2)

    def test_pure_when_rank_one(self, rng):
        for _ in range(20):
            rho = rho_from_params(ginibre_state(2, 1, rng), 4)
            assert abs(np.trace(rho @ rho).real - 1) < 1e-10

    def test_rank_out_of_range(self, rng):
        with pytest.raises(InvalidArgumentError):
            ginibre_state(1, 3, rng)

    def test_single_qubit_average_is_maximally_mixed(self, rng):
        # unitary invariance of the Ginibre construction
        params = np.array([ginibre_state(1, 2, rng) for _ in range(10**4)])
        avg = rho_from_params(params, 2).mean(axis=0)
        assert spectral_distance(avg, np.eye(2) / 2) < 0.02


class TestLikelihood:
    def test_maximally_mixed(self):
        x = matrix_to_params(np.eye(4))
        for k in range(1, 16):
            assert pauli_likelihood(x, k, 2, 1) == pytest.approx(0.5)
            assert pauli_likelihood(x, k, 2, -1) == pytest.approx(0.5)

    def test_eigenstate(self):
        x = matrix_to_params(np.array([[1], [0]]))
        assert pauli_likelihood(x, 3, 1, 1) == 1.0

    def test_identity_measurement(self, rng):
        assert pauli_likelihood(ginibre_state(2, 3, rng), 0, 2, 1) == pytest.approx(1.0)

    def test_against_trace_formula(self, rng):
        x = ginibre_state(2, 2, rng)
        rho = rho_from_params(x, 4)
        for k in range(16):
            expected = np.trace(rho @ pauli(k, 2)).real
            assert pauli_expectation(x, k, 2) == pytest.approx(expected, abs=1e-12)

    def test_outcomes_sum_to_one(self, rng):
        x = ginibre_state(3, 2, rng)
        for k in range(64):
            assert pauli_likelihood(x, k, 3, 1) + pauli_likelihood(x, k, 3, -1) == 1.0

    def test_bad_outcome(self, rng):
        with pytest.raises(InvalidArgumentError):
            pauli_likelihood(ginibre_state(1, 1, rng), 1, 1, 0)

    def test_rank_model_binomial(self, rng):
        model = rank_model(1, 1)
        particles = model.sample_prior(rng, 5)
        p = 0.5 * (1 + pauli_expectation(particles, 1, 1))
        like = model.likelihood(3, PauliSetting(1, 4), particles)
        np.testing.assert_allclose(like, 4 * p**3 * (1 - p), rtol=1e-12)
        assert model.dimension == 4

    def test_random_index_excludes_identity(self, rng):
        draws = {random_pauli_index(1, rng) for _ in range(200)}
        assert draws == {1, 2, 3}
        assert 0 in {random_pauli_index(1, rng, include_identity=True) for _ in range(200)}


class TestSpectralDistance:
    def test_examples(self):
        assert spectral_distance(np.eye(2) / 2, np.eye(2) / 2) == 0.0
        assert spectral_distance(np.diag([1, 0]), np.diag([0, 1])) == pytest.approx(1.0)
        assert spectral_distance(np.diag([1, 0]), np.eye(2) / 2) == pytest.approx(0.5)

    def test_matches_svd(self, rng):
        a, b = rand_rho(rng, 4), rand_rho(rng, 4)
        assert spectral_distance(a, b) == pytest.approx(np.linalg.norm(a - b, 2), rel=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            spectral_distance(np.eye(2), np.eye(4))

    @settings(max_examples=40)
    @given(st.integers(0, 2**32 - 1))
    def test_metric_properties(self, seed):
        r = np.random.default_rng(seed)
        a, b, c = (rand_rho(r, 4) for _ in range(3))
        assert spectral_distance(a, b) == pytest.approx(spectral_distance(b, a), abs=1e-12)
        assert spectral_distance(a, c) <= spectral_distance(a, b) + spectral_distance(b, c) + 1e-9


class TestMeanDensityMatrix:
    def test_single_particle(self, rng):
        x = ginibre_state(2, 2, rng)
        cloud = ParticleCloud(x[None, :], np.ones(1))
        np.testing.assert_allclose(mean_density_matrix(cloud, 4), rho_from_params(x, 4), atol=1e-14)

    def test_two_pure_states(self):
        x = np.array([matrix_to_params(np.array([[1], [0]])), matrix_to_params(np.array([[0], [1]]))])
        rho = mean_density_matrix(ParticleCloud(x, np.array([0.5, 0.5])), 2)
        np.testing.assert_allclose(rho, np.eye(2) / 2, atol=1e-14)

    def test_averages_states_not_parameters(self):
        # x and -x give the same state but average to zero in parameter space
        x = matrix_to_params(np.array([[1], [1j]]))
        rho = mean_density_matrix(ParticleCloud(np.array([x, -x]), np.array([0.5, 0.5])), 2)
        np.testing.assert_allclose(rho, rho_from_params(x, 2), atol=1e-14)

    def test_mae_over_rank_models_is_a_state(self, rng):
        entries = []
        for r, lp in zip((1, 2, 3, 4), (-2.0, -0.5, -1.0, -3.0)):
            model = rank_model(2, r)
            cloud = init_cloud(model, 50, rng)
            cloud = ParticleCloud(cloud.particles, rng.dirichlet(np.ones(50)), lp)
            entries.append(EnsembleEntry(model, cloud, 0.0))
        ens = ModelEnsemble(entries)
        check_density_matrix(model_average_estimate(ens))


class TestDensityMatrixChecks:
    def test_random_draws_are_valid(self):
        # invariants across qubit counts and every rank
        r = np.random.default_rng(11)
        for n in (1, 2, 3):
            dim = 2**n
            for rank in range(1, dim + 1):
                params = r.normal(size=(200, 2 * dim * rank))
                for rho in rho_from_params(params, dim):
                    check_density_matrix(rho)

    @pytest.mark.parametrize("bad", [
        np.array([[1, 1], [0, 0]], dtype=complex),
        np.diag([0.7, 0.7]),
        np.diag([1.2, -0.2]),
    ])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            check_density_matrix(bad)

    def test_json_roundtrip(self, rng):
        rho = rand_rho(rng, 4)
        obj = json.loads(json.dumps(density_matrix_to_json(rho)))
        assert obj["dim"] == 4 and len(obj["re"]) == 16
        np.testing.assert_array_equal(density_matrix_from_json(obj), rho)
        # row-major layout
        assert obj["re"][1] == rho[0, 1].real
