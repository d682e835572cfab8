"""
Graph model for partially observed diffusion networks
Erdős–Rényi generation, degree profiles, observation subsets and connection regimes

Features:
- Seeded, counter-based random streams (Philox) for exact Monte Carlo replay
- Dense symmetric adjacency storage
- Connection-probability schedules for the dense, uniform-sparse and very sparse regimes
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import networkx as nx
import numpy as np

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]


class InvalidProbabilityError(ValueError):
    """Connection probability outside [0, 1]."""


class DegenerateSubsetError(ValueError):
    """Observation subset would be too small or would cover every node."""


def make_rng(seed: SeedLike) -> np.random.Generator:
    """
    Build a 64-bit counter-based generator from a seed or pass a stream through.

    Args:
        seed: int, SeedSequence, or an existing Generator (used as-is)

    Returns:
        numpy Generator backed by Philox
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph stored as a dense 0/1 adjacency matrix."""

    n: int
    adj: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adj, dtype=np.uint8)
        if adj.shape != (self.n, self.n):
            raise ValueError(f"adjacency shape {adj.shape} does not match n={self.n}")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency matrix must be symmetric")
        if np.any(np.diag(adj) != 0):
            raise ValueError("adjacency matrix must have a zero diagonal")
        adj = adj.copy()
        adj.setflags(write=False)
        object.__setattr__(self, "adj", adj)

    @classmethod
    def from_edges(cls, n: int, edges: List[Tuple[int, int]]) -> "Graph":
        """Build a graph from an undirected edge list."""
        adj = np.zeros((n, n), dtype=np.uint8)
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-loop ({i}, {j}) is not allowed")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={n}")
            adj[i, j] = 1
            adj[j, i] = 1
        return cls(n, adj)

    def edges(self) -> List[Tuple[int, int]]:
        """Sorted edge list with i < j."""
        rows, cols = np.nonzero(np.triu(self.adj, k=1))
        return [(int(i), int(j)) for i, j in zip(rows, cols)]

    def subgraph(self, s: "ObservationSet") -> np.ndarray:
        """Adjacency G_S of the probed subgraph."""
        idx = np.asarray(s.indices)
        return self.adj[np.ix_(idx, idx)].copy()

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges())
        return g


@dataclass(frozen=True)
class DegreeProfile:
    """Node degrees d_i = 1 + number of neighbors (the node counts itself)."""

    degrees: np.ndarray
    d_min: int
    d_max: int


@dataclass(frozen=True)
class ObservationSet:
    """Sorted set S of probed nodes."""

    indices: Tuple[int, ...]
    xi_target: float
    n: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if list(idx) != sorted(set(idx)):
            raise ValueError("observation indices must be sorted and distinct")
        if idx and (idx[0] < 0 or idx[-1] >= self.n):
            raise ValueError(f"observation indices must lie in [0, {self.n})")
        if len(idx) < 2:
            raise DegenerateSubsetError(f"|S|={len(idx)} must be at least 2")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def all_nodes(cls, n: int) -> "ObservationSet":
        """Full-observability baseline S = {0, ..., n-1}."""
        return cls(indices=tuple(range(n)), xi_target=1.0, n=n)

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def is_partial(self) -> bool:
        return self.size < self.n

    def complement(self) -> Tuple[int, ...]:
        """Latent nodes S'."""
        observed = set(self.indices)
        return tuple(i for i in range(self.n) if i not in observed)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.intp)


@dataclass(frozen=True)
class ConnectionRegime:
    """
    Connection-probability schedule N -> p_N.

    kind is one of "dense", "uniform_sparse", "very_sparse" or "custom".
    """

    kind: str
    p: Optional[float] = None
    c: float = 0.25
    a: float = 0.5
    schedule: Optional[Callable[[int], float]] = field(default=None, compare=False)

    @classmethod
    def dense(cls, p: float) -> "ConnectionRegime":
        if not 0.0 < p <= 1.0:
            raise InvalidProbabilityError(f"dense regime needs 0 < p <= 1, got {p}")
        return cls(kind="dense", p=float(p))

    @classmethod
    def uniform_sparse(cls, c: float = 0.25, a: float = 0.5) -> "ConnectionRegime":
        """p_N = c * log(N) / N**a with a < 1."""
        if not (c > 0 and 0 < a < 1):
            raise ValueError(f"uniform-sparse schedule needs c > 0 and 0 < a < 1, got c={c}, a={a}")
        return cls(kind="uniform_sparse", c=float(c), a=float(a))

    @classmethod
    def very_sparse(cls, c_of_n: Callable[[int], float]) -> "ConnectionRegime":
        """p_N = c_N / N for a caller-supplied c_N."""
        return cls(kind="very_sparse", schedule=c_of_n)

    @classmethod
    def custom(cls, p_of_n: Callable[[int], float]) -> "ConnectionRegime":
        return cls(kind="custom", schedule=p_of_n)

    def p_of(self, n: int) -> float:
        """Connection probability for a network of n nodes."""
        if self.kind == "dense":
            value = self.p
        elif self.kind == "uniform_sparse":
            value = self.c * math.log(n) / n ** self.a
        elif self.kind == "very_sparse":
            value = self.schedule(n) / n
        elif self.kind == "custom":
            value = self.schedule(n)
        else:
            raise ValueError(f"unknown regime kind '{self.kind}'")
        if not 0.0 < value <= 1.0:
            raise InvalidProbabilityError(
                f"{self.kind} regime gives p_N={value} at N={n}, outside (0, 1]"
            )
        return float(value)

    def omega(self, n: int) -> float:
        """omega_N = N p_N / log N; diverges in the uniform concentration regime."""
        return n * self.p_of(n) / math.log(n)

    def to_dict(self) -> Dict:
        if self.kind == "dense":
            return {"kind": "dense", "p": self.p}
        if self.kind == "uniform_sparse":
            return {"kind": "uniform_sparse", "c": self.c, "a": self.a}
        raise ValueError(f"regime '{self.kind}' holds a callable and cannot be serialized")

    @classmethod
    def from_dict(cls, data: Dict) -> "ConnectionRegime":
        kind = data.get("kind")
        if kind == "dense":
            return cls.dense(float(data["p"]))
        if kind == "uniform_sparse":
            return cls.uniform_sparse(float(data.get("c", 0.25)), float(data.get("a", 0.5)))
        raise ValueError(f"regime kind must be 'dense' or 'uniform_sparse', got {kind!r}")


def generate_er(n: int, p: float, seed: SeedLike) -> Graph:
    """
    Draw an Erdős–Rényi graph: every unordered pair is an independent Bernoulli(p) edge.

    Args:
        n: number of nodes (>= 2)
        p: connection probability in [0, 1]
        seed: seed or stream handle

    Returns:
        Graph with symmetric adjacency and zero diagonal
    """
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got {n}")
    if not 0.0 <= p <= 1.0:
        raise InvalidProbabilityError(f"probability must lie in [0, 1], got {p}")

    rng = make_rng(seed)
    draws = rng.random((n, n)) < p
    upper = np.triu(draws, k=1)
    adj = (upper | upper.T).astype(np.uint8)
    return Graph(n, adj)


def degrees(g: Graph) -> DegreeProfile:
    """Degree profile with d_i = 1 + sum of row i."""
    d = 1 + g.adj.sum(axis=1, dtype=np.int64)
    d.setflags(write=False)
    return DegreeProfile(degrees=d, d_min=int(d.min()), d_max=int(d.max()))


def is_connected(g: Graph) -> bool:
    """True iff a breadth-first traversal from node 0 reaches every node."""
    reached = nx.node_connected_component(g.to_networkx(), 0)
    return len(reached) == g.n


def sample_observation_set(n: int, xi: float, seed: SeedLike) -> ObservationSet:
    """
    Draw the probed set S uniformly without replacement, |S| = round(xi * n).

    Args:
        n: number of nodes
        xi: target fraction of monitored nodes, in (0, 1)
        seed: seed or stream handle

    Returns:
        ObservationSet with sorted indices
    """
    if not 0.0 < xi < 1.0:
        raise DegenerateSubsetError(f"fraction xi must lie in (0, 1), got {xi}")
    size = int(math.floor(xi * n + 0.5))
    if size < 2 or size >= n:
        raise DegenerateSubsetError(
            f"round(xi*n)={size} must satisfy 2 <= |S| < n={n}"
        )
    rng = make_rng(seed)
    picked = np.sort(rng.choice(n, size=size, replace=False))
    return ObservationSet(indices=tuple(int(i) for i in picked), xi_target=float(xi), n=n)


def concentration_ratio(profile: DegreeProfile, n: int, p: float) -> Tuple[float, float]:
    """
    Normalized extreme degrees (d_min / (n p), d_max / (n p)).

    Both ratios approach 1 under the uniform concentration regime.
    """
    if p <= 0:
        raise InvalidProbabilityError(f"concentration ratio needs p > 0, got {p}")
    scale = n * p
    return profile.d_min / scale, profile.d_max / scale
