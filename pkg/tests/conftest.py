"""Shared builders for small diffusion-network instances."""

import numpy as np
import pytest

from combination import CombinationPolicy, apply_policy
from graph_model import Graph, generate_er, sample_observation_set


def make_instance(n: int, p: float, xi: float, seed: int, policy: CombinationPolicy = None):
    """Graph, combination matrix and probed set drawn from one seed."""
    policy = policy or CombinationPolicy.metropolis(0.99)
    graph_seed, subset_seed = np.random.SeedSequence(seed).spawn(2)
    g = generate_er(n, p, graph_seed)
    a = apply_policy(g, policy)
    s = sample_observation_set(n, xi, subset_seed)
    return g, a, s


@pytest.fixture
def small_instance():
    return make_instance(10, 0.4, 0.6, seed=11)


@pytest.fixture
def path_graph():
    return Graph.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def triangle():
    return Graph.from_edges(3, [(0, 1), (0, 2), (1, 2)])


@pytest.fixture
def star():
    return Graph.from_edges(5, [(0, j) for j in range(1, 5)])
