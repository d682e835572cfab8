import numpy as np
import pytest

from clustering import (
    EmptyInputError, ShapeMismatchError, cluster_matrix, cluster_two, kmeans_two, margins,
    recover_graph, recovery_indicator,
)
from combination import CombinationPolicy, apply_policy
from correlation import exact_r0, exact_r1, restrict
from estimators import EstimateMatrix, EstimatorKind, limiting_granger
from graph_model import Graph, ObservationSet

from conftest import make_instance


def exhaustive_split(values):
    """Reference rule written as a plain loop over every split."""
    v = sorted(values)
    best, best_gap = None, -np.inf
    for j in range(1, len(v)):
        if v[j - 1] == v[j]:
            continue
        c0 = sum(v[:j]) / j
        c1 = sum(v[j:]) / (len(v) - j)
        mid = (c0 + c1) / 2
        if v[j - 1] <= mid <= v[j] and c1 - c0 > best_gap:
            best, best_gap = j, c1 - c0
    return best


def well_separated(rng, k, size):
    nu0 = rng.uniform(-5, 5)
    nu1 = nu0 + rng.uniform(0.1, 10)
    eps = rng.uniform(0, 1) * (nu1 - nu0) / 8
    values = np.concatenate([nu0 + rng.uniform(-eps, eps, k), nu1 + rng.uniform(-eps, eps, size - k)])
    labels = np.r_[np.zeros(k, dtype=int), np.ones(size - k, dtype=int)]
    order = rng.permutation(size)
    return values[order], labels[order]


class TestClusterTwo:
    def test_perfect_separation(self):
        result = cluster_two([0, 0, 0, 1, 1])
        assert result.split_index == 3
        assert (result.c0, result.c1) == (0.0, 1.0)
        assert result.assignments.tolist() == [0, 0, 0, 1, 1]

    def test_unbalanced_clusters(self):
        rng = np.random.default_rng(0)
        values = np.concatenate([rng.uniform(-0.01, 0.01, 98), rng.uniform(0.99, 1.01, 2)])
        result = cluster_two(values)
        assert result.split_index == 98
        assert result.assignments[98:].tolist() == [1, 1]
        assert result.assignments[:98].sum() == 0

    def test_all_equal_values_form_one_cluster(self):
        result = cluster_two([0.5] * 6)
        assert result.degenerate
        assert result.assignments.sum() == 0

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            cluster_two([])

    def test_recovers_well_separated_partitions(self):
        rng = np.random.default_rng(1)
        for trial in range(1000):
            size = int(rng.integers(2, 101))
            k = int(rng.integers(1, size))
            if trial % 10 == 0:
                size, k = 100, 98
            values, labels = well_separated(rng, k, size)
            result = cluster_two(values)
            assert result.split_index == k
            assert np.array_equal(result.assignments, labels)

    def test_agrees_with_exhaustive_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(500):
            size = int(rng.integers(2, 13))
            values = rng.normal(size=size)
            assert cluster_two(values).split_index == exhaustive_split(values)

    def test_shift_and_scale_equivariance(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            values = rng.normal(size=20)
            base = cluster_two(values)
            moved = cluster_two(2.5 * values - 1.0)
            assert moved.split_index == base.split_index
            assert np.array_equal(moved.assignments, base.assignments)

    def test_chosen_split_separates_at_midpoint(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            values = rng.exponential(size=30)
            result = cluster_two(values)
            assert values[result.assignments == 0].max() <= result.threshold + 1e-12
            assert values[result.assignments == 1].min() >= result.threshold - 1e-12

    def test_kmeans_splits_a_spread_dominant_cluster(self):
        values = np.concatenate([np.linspace(0.0, 1.8, 98), [3.0, 3.0]])
        assert cluster_two(values).split_index == 98
        assert kmeans_two(values).split_index != 98


class TestClusterMatrix:
    def _triangle_plus_isolated(self):
        g = Graph.from_edges(4, [(0, 1), (0, 2), (1, 2)])
        return g, apply_policy(g, CombinationPolicy.metropolis(0.99)).a

    def test_true_matrix_is_recovered(self):
        g, a = self._triangle_plus_isolated()
        assert np.array_equal(recover_graph(a), g.adj)

    def test_tiny_antisymmetric_perturbation(self):
        g, a = self._triangle_plus_isolated()
        noise = np.triu(np.full((4, 4), 1e-13), k=1)
        assert np.array_equal(recover_graph(a + noise - noise.T), g.adj)

    def test_output_is_symmetric_with_zero_diagonal(self):
        rng = np.random.default_rng(5)
        adjacency = recover_graph(rng.normal(size=(8, 8)))
        assert np.array_equal(adjacency, adjacency.T)
        assert np.all(np.diag(adjacency) == 0)

    def test_and_rule_keeps_only_mutual_entries(self):
        m = np.zeros((3, 3))
        m[0, 1] = 1.0
        m[1, 2] = m[2, 1] = 1.0
        assert cluster_matrix(m, symmetrize="or").adjacency[0, 1] == 1
        assert cluster_matrix(m, symmetrize="and").adjacency[0, 1] == 0
        assert cluster_matrix(m, symmetrize="and").adjacency[1, 2] == 1

    def test_constant_matrix_gives_no_edges(self):
        result = cluster_matrix(np.full((4, 4), 0.2))
        assert result.degenerate
        assert result.adjacency.sum() == 0

    def test_limiting_granger_recovers_small_graph(self):
        g, a, s = make_instance(60, 0.2, 0.9, seed=2)
        est = limiting_granger(exact_r0(a, 1.0), exact_r1(a, 1.0), s)
        assert recovery_indicator(recover_graph(est), g.subgraph(s))

    @pytest.mark.slow
    def test_limiting_granger_recovers_dense_regime(self):
        recovered = 0
        for seed in range(50):
            g, a, s = make_instance(1000, 0.1, 0.6, seed=seed)
            est = limiting_granger(exact_r0(a, 1.0), exact_r1(a, 1.0), s)
            recovered += recovery_indicator(recover_graph(est), g.subgraph(s))
        assert recovered >= 45


class TestMargins:
    def test_true_submatrix(self):
        g, a, s = make_instance(12, 0.4, 0.5, seed=6)
        a_s = restrict(a.a, s)
        est = EstimateMatrix(values=a_s, kind=EstimatorKind.GRANGER, source="exact", s_indices=s)
        report = margins(est, a, 12, 0.4)
        off = a_s[~np.eye(s.size, dtype=bool)]
        assert report.delta_high == 0.0
        assert report.Delta_low == off[off > 0].min()
        assert report.scale == pytest.approx(4.8)
        assert report.scaled_Delta_low == pytest.approx(4.8 * report.Delta_low)

    def test_no_edges_leaves_connected_margins_undefined(self):
        a = 0.9 * np.eye(5)
        s = ObservationSet(indices=(0, 2, 4), xi_target=0.6, n=5)
        report = margins(np.zeros((3, 3)), a, 5, 0.1, s=s)
        assert not report.defined
        assert np.isnan(report.Delta_low)
        assert report.to_dict()["Delta_low"] is None

    def test_needs_observation_set(self):
        with pytest.raises(ValueError):
            margins(np.zeros((2, 2)), np.eye(2), 2, 0.1)


class TestRecoveryIndicator:
    def test_identical(self):
        adj = np.array([[0, 1], [1, 0]])
        assert recovery_indicator(adj, adj)

    def test_flipped_edge(self):
        truth = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]])
        flipped = truth.copy()
        flipped[1, 2] = flipped[2, 1] = 1
        assert not recovery_indicator(flipped, truth)

    def test_empty_graphs(self):
        assert recovery_indicator(np.zeros((3, 3)), np.zeros((3, 3)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            recovery_indicator(np.zeros((2, 2)), np.zeros((3, 3)))
