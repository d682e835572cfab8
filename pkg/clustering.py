"""
Two-cluster split of estimated matrix entries
Modified k-means over admissible splits, margin diagnostics and recovery checks
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Union

import numpy as np

from combination import CombinationMatrix
from correlation import restrict
from estimators import EstimateMatrix
from graph_model import ObservationSet

logger = logging.getLogger(__name__)

DEGENERATE_TOL = 1e-12


class EmptyInputError(ValueError):
    """Nothing to cluster."""


class ShapeMismatchError(ValueError):
    """Adjacency matrices of different shapes."""


@dataclass
class ClusterResult:
    """
    Outcome of a two-cluster split.

    split_index is j* (size of C0 among the sorted values) or None for a
    single-cluster result; assignments follow the input order (0 = C0, 1 = C1).
    """

    split_index: Optional[int]
    c0: float
    c1: Optional[float]
    assignments: np.ndarray
    threshold: Optional[float] = None
    adjacency: Optional[np.ndarray] = None

    @property
    def degenerate(self) -> bool:
        return self.split_index is None

    def to_dict(self) -> Dict:
        data = {
            "split_index": self.split_index,
            "c0": self.c0,
            "c1": self.c1,
            "threshold": self.threshold,
            "assignments": self.assignments.astype(int).tolist(),
        }
        if self.adjacency is not None:
            data["adjacency"] = self.adjacency.astype(int).tolist()
        return data


@dataclass
class MarginReport:
    """Extremes of estimated entries over disconnected and connected pairs."""

    delta_low: float
    delta_high: float
    Delta_low: float
    Delta_high: float
    scale: float
    empirical_bias: float
    defined: bool

    @property
    def scaled_delta_low(self) -> float:
        return self.scale * self.delta_low

    @property
    def scaled_delta_high(self) -> float:
        return self.scale * self.delta_high

    @property
    def scaled_Delta_low(self) -> float:
        return self.scale * self.Delta_low

    @property
    def scaled_Delta_high(self) -> float:
        return self.scale * self.Delta_high

    @property
    def empirical_gap(self) -> float:
        return self.scale * (self.Delta_low - self.delta_high)

    def to_dict(self) -> Dict:
        def _clean(x: float) -> Optional[float]:
            return None if np.isnan(x) else float(x)

        return {
            "delta_low": _clean(self.delta_low),
            "delta_high": _clean(self.delta_high),
            "Delta_low": _clean(self.Delta_low),
            "Delta_high": _clean(self.Delta_high),
            "scale": self.scale,
            "scaled_delta_low": _clean(self.scaled_delta_low),
            "scaled_delta_high": _clean(self.scaled_delta_high),
            "scaled_Delta_low": _clean(self.scaled_Delta_low),
            "scaled_Delta_high": _clean(self.scaled_Delta_high),
            "empirical_bias": _clean(self.empirical_bias),
            "empirical_gap": _clean(self.empirical_gap),
            "defined": self.defined,
        }


def _candidate_splits(values: np.ndarray):
    """
    Sort the values and evaluate every split j = 1..L-1.

    Returns the sort order, sorted values, split sizes, centroids and the
    admissibility mask (midpoint separates the classes, ties never split).
    """
    order = np.argsort(values, kind="stable")
    ordered = values[order]
    size = ordered.size
    prefix = np.cumsum(ordered)
    j = np.arange(1, size)
    c0 = prefix[:-1] / j
    c1 = (prefix[-1] - prefix[:-1]) / (size - j)
    mid = (c0 + c1) / 2.0
    tol = DEGENERATE_TOL * (1.0 + np.abs(ordered).max())
    left, right = ordered[:-1], ordered[1:]
    admissible = (left <= mid + tol) & (mid <= right + tol) & (left < right)
    return order, ordered, j, c0, c1, admissible


def _single_cluster(values: np.ndarray) -> ClusterResult:
    return ClusterResult(split_index=None, c0=float(values.mean()), c1=None,
                         assignments=np.zeros(values.size, dtype=np.uint8))


def _split(values, score_fn) -> ClusterResult:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptyInputError("cannot cluster an empty vector")
    if v.size == 1 or v.max() - v.min() <= DEGENERATE_TOL * (1.0 + np.abs(v).max()):
        logger.debug("all %d values coincide, returning a single cluster", v.size)
        return _single_cluster(v)

    order, ordered, j, c0, c1, admissible = _candidate_splits(v)
    candidates = np.flatnonzero(admissible)
    if candidates.size == 0:
        logger.debug("no admissible split among %d values, returning a single cluster", v.size)
        return _single_cluster(v)

    scores = score_fn(j[candidates], v.size, c0[candidates], c1[candidates])
    best = int(candidates[int(np.argmax(scores))])
    split = int(j[best])

    assignments = np.zeros(v.size, dtype=np.uint8)
    assignments[order[split:]] = 1
    return ClusterResult(split_index=split, c0=float(c0[best]), c1=float(c1[best]),
                         assignments=assignments, threshold=float((c0[best] + c1[best]) / 2.0))


def cluster_two(values) -> ClusterResult:
    """
    Split values into a low class C0 and a high class C1.

    Among the splits whose centroid midpoint separates the sorted classes, the one
    with the largest centroid distance c1 - c0 wins (first on ties). Unlike the
    minimum-cost rule this does not split a dominant, spread-out cluster.

    Args:
        values: 1-D array of L >= 1 reals

    Returns:
        ClusterResult; split_index is None when all values coincide
    """
    return _split(values, lambda j, size, c0, c1: c1 - c0)


def kmeans_two(values) -> ClusterResult:
    """Classic two-means: the admissible split with minimum within-cluster cost."""
    # minimum within-cluster cost <=> maximum between-cluster sum of squares
    return _split(values, lambda j, size, c0, c1: j * (size - j) / size * (c1 - c0) ** 2)


def _values_of(est: Union[EstimateMatrix, np.ndarray]) -> np.ndarray:
    return est.values if isinstance(est, EstimateMatrix) else np.asarray(est, dtype=float)


def cluster_matrix(est: Union[EstimateMatrix, np.ndarray], symmetrize: str = "or") -> ClusterResult:
    """
    Cluster the |S|(|S|-1) ordered off-diagonal entries and build the adjacency.

    Args:
        est: estimated submatrix
        symmetrize: "or" (default) or "and" rule combining (i, j) and (j, i)

    Returns:
        ClusterResult carrying the symmetric 0/1 adjacency with zero diagonal
    """
    m = _values_of(est)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
        raise ShapeMismatchError(f"need a square matrix with at least 2 rows, got {m.shape}")
    if symmetrize not in ("or", "and"):
        raise ValueError(f"symmetrize must be 'or' or 'and', got {symmetrize!r}")

    off = ~np.eye(m.shape[0], dtype=bool)
    result = cluster_two(m[off])

    labels = np.zeros(m.shape, dtype=bool)
    labels[off] = result.assignments.astype(bool)
    logger.debug("symmetrizing recovered adjacency with the %s rule", symmetrize.upper())
    adjacency = (labels | labels.T) if symmetrize == "or" else (labels & labels.T)
    np.fill_diagonal(adjacency, False)
    result.adjacency = adjacency.astype(np.uint8)
    return result


def recover_graph(est: Union[EstimateMatrix, np.ndarray]) -> np.ndarray:
    """Recovered subgraph adjacency; a single-cluster outcome gives no edges."""
    return cluster_matrix(est).adjacency


def margins(est: Union[EstimateMatrix, np.ndarray], a: Union[CombinationMatrix, np.ndarray],
            n_nodes: int, p: float, s: Optional[ObservationSet] = None) -> MarginReport:
    """
    Lower/upper margins of the estimate over disconnected and connected pairs.

    Pairs are classified from the support of the true A_S. Margins of an empty
    class are NaN and the report is flagged undefined.

    Args:
        est: estimated submatrix
        a: true N x N combination matrix
        n_nodes: network size N
        p: connection probability, giving the scale s_N = N p
        s: probed set, needed when est is a bare array
    """
    m = _values_of(est)
    if s is None:
        s = est.s_indices if isinstance(est, EstimateMatrix) else None
    if s is None:
        raise ValueError("margins need the observation set of the estimate")
    arr = a.a if isinstance(a, CombinationMatrix) else np.asarray(a, dtype=float)
    truth = restrict(arr, s)
    if truth.shape != m.shape:
        raise ShapeMismatchError(f"estimate {m.shape} vs true submatrix {truth.shape}")

    off = ~np.eye(m.shape[0], dtype=bool)
    disconnected = m[off & (truth == 0)]
    connected = m[off & (truth > 0)]
    scale = float(n_nodes * p)

    def _extremes(x: np.ndarray):
        return (float(x.min()), float(x.max())) if x.size else (np.nan, np.nan)

    d_low, d_high = _extremes(disconnected)
    c_low, c_high = _extremes(connected)
    bias = scale * float(disconnected.mean()) if disconnected.size else np.nan
    return MarginReport(delta_low=d_low, delta_high=d_high, Delta_low=c_low, Delta_high=c_high,
                        scale=scale, empirical_bias=bias,
                        defined=bool(disconnected.size and connected.size))


def recovery_indicator(recovered: np.ndarray, truth: np.ndarray) -> bool:
    """True iff the recovered adjacency equals the true one exactly."""
    recovered = np.asarray(recovered)
    truth = np.asarray(truth)
    if recovered.shape != truth.shape:
        raise ShapeMismatchError(f"recovered {recovered.shape} vs truth {truth.shape}")
    return bool(np.array_equal(recovered != 0, truth != 0))
