import numpy as np
import pytest

from combination import CombinationPolicy
from correlation import (
    CorrelationAccumulator, IndexOutOfRangeError, InsufficientSamplesError, SingularSystemError,
    empirical_correlations, exact_pair, exact_r0, exact_r1, labeled_submatrix, r0_series,
    r1_series, restrict,
)
from diffusion_sim import DiffusionConfig, SampleBlock, simulate
from graph_model import ObservationSet

from conftest import make_instance


def _block(data, indices=(0, 1), n=3):
    return SampleBlock(s_indices=ObservationSet(indices=indices, xi_target=0.5, n=n),
                       data=np.asarray(data, dtype=float), sigma=1.0)


class TestExact:
    def test_zero_matrix(self):
        np.testing.assert_allclose(exact_r0(np.zeros((4, 4)), 2.0), 4.0 * np.eye(4))
        np.testing.assert_allclose(exact_r1(np.zeros((4, 4)), 2.0), np.zeros((4, 4)))

    def test_scaled_identity(self):
        np.testing.assert_allclose(exact_r0(0.99 * np.eye(3), 1.0), 50.25125628 * np.eye(3), rtol=1e-9)
        np.testing.assert_allclose(exact_r1(0.5 * np.eye(2), 1.0), (0.5 / 0.75) * np.eye(2), rtol=1e-12)

    def test_matches_truncated_series(self, small_instance):
        _, a, _ = small_instance
        for k in (5, 50, 200):
            series, tail = r0_series(a, 1.5, k)
            assert np.abs(exact_r0(a, 1.5) - series).max() <= tail + 1e-9
            series1, tail1 = r1_series(a, 1.5, k)
            assert np.abs(exact_r1(a, 1.5) - series1).max() <= tail1 + 1e-9

    def test_solves_the_stationary_equation(self):
        _, a, _ = make_instance(200, 0.1, 0.5, seed=4)
        r0 = exact_r0(a, 1.0)
        residual = (np.eye(200) - a.a @ a.a) @ r0 - np.eye(200)
        assert np.abs(residual).max() < 1e-9
        np.testing.assert_allclose(r0, r0.T, atol=1e-10)
        assert np.linalg.eigvalsh(r0).min() > 0

    def test_pair_is_symmetric_and_consistent(self, small_instance):
        _, a, _ = small_instance
        pair = exact_pair(a, 1.0)
        assert pair.kind == "exact"
        np.testing.assert_allclose(pair.r1, a.a @ pair.r0, atol=1e-10)
        np.testing.assert_allclose(pair.r1, pair.r1.T, atol=1e-12)

    def test_unstable_matrix(self):
        with pytest.raises(SingularSystemError):
            exact_r0(np.array([[1.0, 0.2], [0.2, 1.0]]), 1.0)


class TestRestrict:
    def test_identity(self):
        s = ObservationSet(indices=(1, 4, 6), xi_target=0.4, n=8)
        np.testing.assert_array_equal(restrict(np.eye(8), s), np.eye(3))

    def test_matches_double_loop(self, small_instance):
        _, a, s = small_instance
        r0 = exact_r0(a, 1.0)
        naive = np.array([[r0[i, j] for j in s.indices] for i in s.indices])
        np.testing.assert_array_equal(restrict(r0, s), naive)

    def test_out_of_range(self):
        with pytest.raises(IndexOutOfRangeError):
            restrict(np.eye(3), [0, 5])

    def test_labeled_submatrix_keeps_labels(self):
        z = np.arange(1, 26).reshape(5, 5)
        sub = labeled_submatrix(z, [2, 3], [2, 4, 5])
        assert sub.shape == (2, 3)
        assert list(sub.index) == [2, 3]
        assert list(sub.columns) == [2, 4, 5]
        assert sub.loc[2, 2] == z[1, 1]
        assert sub.loc[3, 5] == z[2, 4]


class TestEmpirical:
    def test_constant_block(self):
        v = np.array([1.0, -2.0])
        pair = empirical_correlations(_block(np.tile(v[:, None], (1, 5))))
        np.testing.assert_allclose(pair.r0, np.outer(v, v))
        np.testing.assert_allclose(pair.r1, np.outer(v, v))

    def test_two_samples_by_hand(self):
        pair = empirical_correlations(_block([[1.0, 0.0], [0.0, 1.0]]))
        np.testing.assert_allclose(pair.r0, 0.5 * np.eye(2))
        np.testing.assert_allclose(pair.r1, [[0.0, 0.0], [1.0, 0.0]])
        assert pair.metadata["r1_normalization"] == "1/(n-1)"

    def test_needs_two_samples(self):
        with pytest.raises(InsufficientSamplesError):
            empirical_correlations(_block([[1.0], [2.0]]))

    def test_gram_matrix_is_psd(self):
        rng = np.random.default_rng(0)
        pair = empirical_correlations(_block(rng.standard_normal((2, 3))))
        assert np.linalg.eigvalsh(pair.r0).min() >= -1e-12

    def test_accumulator_matches_batch(self, small_instance):
        _, a, s = small_instance
        block = simulate(a, DiffusionConfig(sigma=1.0, n_samples=1000), s, seed=3)
        for demean in (False, True):
            acc = CorrelationAccumulator(s, demean=demean)
            for start in range(0, 1000, 300):
                acc.update(block.data[:, start:start + 300])
            streamed = acc.result()
            batch = empirical_correlations(block, demean=demean)
            np.testing.assert_allclose(streamed.r0, batch.r0, rtol=1e-10, atol=1e-10)
            np.testing.assert_allclose(streamed.r1, batch.r1, rtol=1e-10, atol=1e-10)
            assert streamed.n_samples == 1000

    def test_converges_to_exact(self):
        _, a, s = make_instance(20, 0.3, 0.5, seed=1)
        block = simulate(a, DiffusionConfig(sigma=1.0, n_samples=200_000), s, seed=2)
        pair = empirical_correlations(block)
        exact = exact_pair(a, 1.0).restricted(s)
        scale = np.abs(exact.r0).max()
        assert np.abs(pair.r0 - exact.r0).max() < 0.15 * scale
        assert np.abs(pair.r1 - exact.r1).max() < 0.15 * scale

    @pytest.mark.slow
    def test_long_run_matches_exact(self):
        _, a, s = make_instance(20, 0.3, 0.5, seed=1)
        block = simulate(a, DiffusionConfig(sigma=1.0, n_samples=1_000_000), s, seed=2)
        exact = exact_pair(a, 1.0).restricted(s)
        assert np.abs(empirical_correlations(block).r0 - exact.r0).max() < 0.05 * np.abs(exact.r0).max()

    @pytest.mark.slow
    def test_error_shrinks_like_inverse_root_n(self):
        _, a, s = make_instance(10, 0.4, 0.6, seed=3, policy=CombinationPolicy.metropolis(0.8))
        exact = exact_pair(a, 1.0).restricted(s)
        ratios = []
        for seed in range(20):
            small = simulate(a, DiffusionConfig(sigma=1.0, n_samples=20_000), s, seed=seed)
            large = simulate(a, DiffusionConfig(sigma=1.0, n_samples=80_000), s, seed=1000 + seed)
            err_small = np.abs(empirical_correlations(small).r0 - exact.r0).max()
            err_large = np.abs(empirical_correlations(large).r0 - exact.r0).max()
            ratios.append(err_small / err_large)
        assert 1.5 <= np.median(ratios) <= 3.0
