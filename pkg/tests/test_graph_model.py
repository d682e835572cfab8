import math

import numpy as np
import pytest

from graph_model import (
    ConnectionRegime, DegenerateSubsetError, Graph, InvalidProbabilityError, ObservationSet,
    concentration_ratio, degrees, generate_er, is_connected, sample_observation_set,
)


class TestGenerateER:
    def test_zero_probability_gives_empty_graph(self):
        g = generate_er(4, 0.0, seed=1)
        assert g.adj.sum() == 0

    def test_sure_edges_give_complete_graph(self):
        g = generate_er(4, 1.0, seed=1)
        assert np.all(degrees(g).degrees == 4)

    def test_mean_degree_matches_binomial(self):
        g = generate_er(1000, 0.1, seed=7)
        mean = degrees(g).degrees.mean()
        sd = math.sqrt(999 * 0.1 * 0.9)
        assert abs(mean - (1 + 999 * 0.1)) < 3 * sd

    def test_symmetric_with_zero_diagonal(self):
        for seed in range(5):
            g = generate_er(30, 0.3, seed=seed)
            assert np.array_equal(g.adj, g.adj.T)
            assert np.all(np.diag(g.adj) == 0)

    def test_reproducible_for_fixed_seed(self):
        assert np.array_equal(generate_er(50, 0.2, 3).adj, generate_er(50, 0.2, 3).adj)
        assert not np.array_equal(generate_er(50, 0.2, 3).adj, generate_er(50, 0.2, 4).adj)

    def test_rejects_invalid_probability(self):
        with pytest.raises(InvalidProbabilityError):
            generate_er(4, 1.5, seed=0)
        with pytest.raises(InvalidProbabilityError):
            generate_er(4, -0.1, seed=0)

    def test_adjacency_is_read_only(self):
        g = generate_er(5, 0.5, seed=0)
        with pytest.raises(ValueError):
            g.adj[0, 1] = 1


class TestGraph:
    def test_rejects_asymmetric_adjacency(self):
        adj = np.zeros((3, 3), dtype=np.uint8)
        adj[0, 1] = 1
        with pytest.raises(ValueError):
            Graph(3, adj)

    def test_rejects_self_loop(self):
        with pytest.raises(ValueError):
            Graph.from_edges(3, [(1, 1)])

    def test_edges_round_trip(self, path_graph):
        assert path_graph.edges() == [(0, 1), (1, 2)]
        assert Graph.from_edges(3, path_graph.edges()).adj.tolist() == path_graph.adj.tolist()

    def test_subgraph_and_networkx(self, triangle):
        s = ObservationSet(indices=(0, 2), xi_target=0.5, n=3)
        assert triangle.subgraph(s).tolist() == [[0, 1], [1, 0]]
        assert triangle.to_networkx().number_of_edges() == 3


class TestDegrees:
    def test_empty_graph(self):
        profile = degrees(generate_er(4, 0.0, seed=0))
        assert profile.degrees.tolist() == [1, 1, 1, 1]
        assert profile.d_min == profile.d_max == 1

    def test_path_graph(self, path_graph):
        profile = degrees(path_graph)
        assert profile.degrees.tolist() == [2, 3, 2]
        assert (profile.d_min, profile.d_max) == (2, 3)

    def test_isolated_node_gives_unit_minimum(self):
        g = Graph.from_edges(4, [(0, 1), (1, 2)])
        assert degrees(g).d_min == 1


class TestConnectivity:
    def test_empty_graph_is_disconnected(self):
        assert not is_connected(generate_er(3, 0.0, seed=0))

    def test_complete_graph_is_connected(self):
        assert is_connected(generate_er(3, 1.0, seed=0))

    def test_two_disjoint_edges(self):
        assert not is_connected(Graph.from_edges(4, [(0, 1), (2, 3)]))


class TestObservationSet:
    def test_size_rounds(self):
        assert sample_observation_set(10, 0.6, seed=0).size == 6

    def test_rejects_full_subset(self):
        with pytest.raises(DegenerateSubsetError):
            sample_observation_set(5, 0.99, seed=0)

    def test_large_draw_is_distinct_and_sorted(self):
        s = sample_observation_set(1000, 0.2, seed=3)
        assert s.size == 200
        assert len(set(s.indices)) == 200
        assert list(s.indices) == sorted(s.indices)

    def test_rejects_tiny_subset(self):
        with pytest.raises(DegenerateSubsetError):
            sample_observation_set(10, 0.1, seed=0)

    def test_complement_and_full_observability(self):
        s = ObservationSet(indices=(1, 3), xi_target=0.5, n=4)
        assert s.complement() == (0, 2)
        assert s.is_partial
        full = ObservationSet.all_nodes(4)
        assert full.complement() == ()
        assert not full.is_partial

    def test_rejects_unsorted_indices(self):
        with pytest.raises(ValueError):
            ObservationSet(indices=(3, 1), xi_target=0.5, n=4)


class TestConcentration:
    def test_complete_graph(self):
        profile = degrees(generate_er(100, 1.0, seed=0))
        assert concentration_ratio(profile, 100, 1.0) == (1.0, 1.0)

    def test_empty_graph(self):
        profile = degrees(generate_er(10, 0.0, seed=0))
        assert concentration_ratio(profile, 10, 0.5) == pytest.approx((0.2, 0.2))

    def test_rejects_zero_probability(self):
        profile = degrees(generate_er(10, 0.0, seed=0))
        with pytest.raises(InvalidProbabilityError):
            concentration_ratio(profile, 10, 0.0)

    @pytest.mark.slow
    def test_degrees_concentrate_at_large_n(self):
        inside = 0
        for seed in range(100):
            r_min, r_max = concentration_ratio(degrees(generate_er(2000, 0.1, seed)), 2000, 0.1)
            inside += 0.7 <= r_min <= 1.3 and 0.7 <= r_max <= 1.3
        assert inside >= 99

    @pytest.mark.slow
    def test_concentration_improves_under_uniform_regime(self):
        regime = ConnectionRegime.uniform_sparse(0.25, 0.5)
        spread = []
        for n in (250, 500, 1000, 2000):
            p = regime.p_of(n)
            worst = []
            for seed in range(200):
                r_min, r_max = concentration_ratio(degrees(generate_er(n, p, seed)), n, p)
                worst.append(max(abs(r_min - 1), abs(r_max - 1)))
            spread.append(np.mean(worst))
        decreasing_steps = sum(b < a for a, b in zip(spread, spread[1:]))
        assert decreasing_steps >= 2


class TestConnectionRegime:
    def test_dense(self):
        assert ConnectionRegime.dense(0.1).p_of(500) == 0.1

    def test_uniform_sparse_schedule(self):
        regime = ConnectionRegime.uniform_sparse(0.25, 0.5)
        assert regime.p_of(400) == pytest.approx(0.25 * math.log(400) / 20)
        assert regime.omega(400) == pytest.approx(400 * regime.p_of(400) / math.log(400))

    def test_very_sparse_and_custom(self):
        assert ConnectionRegime.very_sparse(lambda n: 3.0).p_of(300) == pytest.approx(0.01)
        assert ConnectionRegime.custom(lambda n: 0.5).p_of(10) == 0.5

    def test_out_of_range_probability(self):
        with pytest.raises(InvalidProbabilityError):
            ConnectionRegime.custom(lambda n: 2.0).p_of(10)
        with pytest.raises(InvalidProbabilityError):
            ConnectionRegime.dense(0.0)

    def test_dict_round_trip(self):
        regime = ConnectionRegime.uniform_sparse(0.3, 0.6)
        assert ConnectionRegime.from_dict(regime.to_dict()) == regime
        with pytest.raises(ValueError):
            ConnectionRegime.custom(lambda n: 0.5).to_dict()
