"""
Correlation matrices of the diffusion process
Exact steady-state R_0 and R_1, empirical counterparts, and series oracles
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg

from combination import CombinationMatrix
from diffusion_sim import SampleBlock
from graph_model import ObservationSet

logger = logging.getLogger(__name__)

MatrixLike = Union[CombinationMatrix, np.ndarray]


class SingularSystemError(RuntimeError):
    """I - A^2 is singular or A is not stable."""


class InsufficientSamplesError(ValueError):
    """Fewer than two samples: the one-lag correlation is undefined."""


class IndexOutOfRangeError(ValueError):
    """Restriction indices fall outside the matrix."""


@dataclass(frozen=True)
class CorrelationPair:
    """
    Zero-lag and one-lag correlations.

    kind is "exact" or "empirical". Exact pairs are N x N until restricted;
    empirical pairs are already |S| x |S| and carry s_indices.
    """

    r0: np.ndarray
    r1: np.ndarray
    kind: str
    n_samples: Optional[int] = None
    s_indices: Optional[ObservationSet] = None
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("exact", "empirical"):
            raise ValueError(f"correlation kind must be 'exact' or 'empirical', got {self.kind!r}")
        if self.r0.shape != self.r1.shape or self.r0.shape[0] != self.r0.shape[1]:
            raise ValueError(f"R0 {self.r0.shape} and R1 {self.r1.shape} must be equal square shapes")

    @property
    def size(self) -> int:
        return self.r0.shape[0]

    def restricted(self, s: ObservationSet) -> "CorrelationPair":
        """Principal submatrices [R_0]_S, [R_1]_S of an unrestricted pair."""
        if self.s_indices is not None:
            raise ValueError("pair is already restricted")
        return replace(self, r0=restrict(self.r0, s), r1=restrict(self.r1, s), s_indices=s)


def _as_array(a: MatrixLike) -> np.ndarray:
    return a.a if isinstance(a, CombinationMatrix) else np.asarray(a, dtype=float)


def _spectral_bound(a: MatrixLike) -> float:
    if isinstance(a, CombinationMatrix):
        return a.rho
    return float(np.abs(np.asarray(a, dtype=float)).sum(axis=1).max()) if np.size(a) else 0.0


def _check_stable(a: np.ndarray):
    if a.size == 0 or np.abs(a).sum(axis=1).max() < 1.0:
        return
    radius = np.abs(np.linalg.eigvals(a)).max()
    if radius >= 1.0:
        raise SingularSystemError(f"combination matrix is not stable (spectral radius {radius:.6f})")


def exact_r0(a: MatrixLike, sigma: float) -> np.ndarray:
    """
    Stationary covariance R_0 = sigma^2 (I - A^2)^{-1}, via a pivoted dense solve.
    """
    a = _as_array(a)
    _check_stable(a)
    n = a.shape[0]
    system = np.eye(n) - a @ a
    try:
        r0 = scipy.linalg.solve(system, (sigma ** 2) * np.eye(n), assume_a="gen")
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"I - A^2 is singular: {exc}") from exc
    return (r0 + r0.T) / 2.0


def exact_r1(a: MatrixLike, sigma: float) -> np.ndarray:
    """One-lag correlation R_1 = A R_0 (symmetric since A and R_0 commute)."""
    arr = _as_array(a)
    r1 = arr @ exact_r0(arr, sigma)
    return (r1 + r1.T) / 2.0


def exact_pair(a: MatrixLike, sigma: float) -> CorrelationPair:
    arr = _as_array(a)
    r0 = exact_r0(arr, sigma)
    r1 = arr @ r0
    return CorrelationPair(r0=r0, r1=(r1 + r1.T) / 2.0, kind="exact",
                           metadata={"sigma": float(sigma)})


def r0_series(a: MatrixLike, sigma: float, k: int) -> Tuple[np.ndarray, float]:
    """
    Truncated series sigma^2 * sum_{i=0..k} A^{2i} and its max-norm tail bound.
    """
    arr = _as_array(a)
    rho = _spectral_bound(a)
    a2 = arr @ arr
    term = np.eye(arr.shape[0])
    total = term.copy()
    for _ in range(k):
        term = term @ a2
        total += term
    tail = 0.0 if rho <= 0 else sigma ** 2 * rho ** (2 * k + 2) / (1.0 - rho ** 2)
    return sigma ** 2 * total, tail


def r1_series(a: MatrixLike, sigma: float, k: int) -> Tuple[np.ndarray, float]:
    """
    Truncated series sigma^2 * (A + A^3 + ... + A^{2k+1}) and its tail bound.
    """
    arr = _as_array(a)
    rho = _spectral_bound(a)
    a2 = arr @ arr
    term = arr.copy()
    total = term.copy()
    for _ in range(k):
        term = term @ a2
        total += term
    tail = 0.0 if rho <= 0 else sigma ** 2 * rho ** (2 * k + 3) / (1.0 - rho ** 2)
    return sigma ** 2 * total, tail


def restrict(m: np.ndarray, s: Union[ObservationSet, Sequence[int]]) -> np.ndarray:
    """Principal submatrix [M]_S."""
    m = np.asarray(m)
    idx = s.as_array() if isinstance(s, ObservationSet) else np.asarray(s, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= m.shape[0]):
        raise IndexOutOfRangeError(
            f"indices span [{idx.min()}, {idx.max()}] but matrix has {m.shape[0]} rows"
        )
    return m[np.ix_(idx, idx)]


def labeled_submatrix(z: np.ndarray, rows: Sequence[int], cols: Sequence[int],
                      one_based: bool = True) -> pd.DataFrame:
    """
    Submatrix Z_{ST} that keeps the original index labels.

    Args:
        z: source matrix
        rows: index set S
        cols: index set T
        one_based: interpret (and label) indices starting at 1

    Returns:
        DataFrame indexed by S with columns T
    """
    z = np.asarray(z)
    offset = 1 if one_based else 0
    r = np.asarray(rows, dtype=np.intp) - offset
    c = np.asarray(cols, dtype=np.intp) - offset
    for label, idx, size in (("row", r, z.shape[0]), ("column", c, z.shape[1])):
        if idx.size and (idx.min() < 0 or idx.max() >= size):
            raise IndexOutOfRangeError(f"{label} index out of range for shape {z.shape}")
    return pd.DataFrame(z[np.ix_(r, c)], index=list(rows), columns=list(cols))


def empirical_correlations(y: SampleBlock, demean: bool = False) -> CorrelationPair:
    """
    Sample correlations over the probed rows.

    R0_hat = (1/n) sum_{i=1..n} y_i y_i^T and
    R1_hat = (1/(n-1)) sum_{i=2..n} y_i y_{i-1}^T.
    """
    data = y.data
    n = data.shape[1]
    if n < 2:
        raise InsufficientSamplesError(f"need at least 2 samples, got {n}")
    if demean:
        data = data - data.mean(axis=1, keepdims=True)
    r0 = data @ data.T / n
    r0 = (r0 + r0.T) / 2.0
    r1 = data[:, 1:] @ data[:, :-1].T / (n - 1)
    return CorrelationPair(
        r0=r0, r1=r1, kind="empirical", n_samples=n, s_indices=y.s_indices,
        metadata={"r0_normalization": "1/n", "r1_normalization": "1/(n-1)", "demeaned": demean},
    )


class CorrelationAccumulator:
    """
    Online accumulation of R0_hat and R1_hat over consecutive column chunks.

    Single writer: feed chunks in time order, then call result().
    """

    def __init__(self, s_indices: ObservationSet, demean: bool = False):
        self.s_indices = s_indices
        self.demean = demean
        size = s_indices.size
        self._sum0 = np.zeros((size, size))
        self._sum1 = np.zeros((size, size))
        self._total = np.zeros(size)
        self._first: Optional[np.ndarray] = None
        self._last: Optional[np.ndarray] = None
        self.n_samples = 0

    def update(self, chunk: np.ndarray):
        chunk = np.asarray(chunk, dtype=float)
        if chunk.shape[0] != self.s_indices.size:
            raise ValueError(f"chunk has {chunk.shape[0]} rows, expected {self.s_indices.size}")
        if chunk.shape[1] == 0:
            return
        self._sum0 += chunk @ chunk.T
        self._sum1 += chunk[:, 1:] @ chunk[:, :-1].T
        if self._last is not None:
            self._sum1 += np.outer(chunk[:, 0], self._last)
        else:
            self._first = chunk[:, 0].copy()
        self._total += chunk.sum(axis=1)
        self._last = chunk[:, -1].copy()
        self.n_samples += chunk.shape[1]

    def result(self) -> CorrelationPair:
        n = self.n_samples
        if n < 2:
            raise InsufficientSamplesError(f"need at least 2 samples, got {n}")
        sum0, sum1 = self._sum0, self._sum1
        if self.demean:
            mean = self._total / n
            sum0 = sum0 - n * np.outer(mean, mean)
            lead = self._total - self._first
            lag = self._total - self._last
            sum1 = sum1 - np.outer(lead, mean) - np.outer(mean, lag) + (n - 1) * np.outer(mean, mean)
        r0 = sum0 / n
        return CorrelationPair(
            r0=(r0 + r0.T) / 2.0, r1=sum1 / (n - 1), kind="empirical", n_samples=n,
            s_indices=self.s_indices,
            metadata={"r0_normalization": "1/n", "r1_normalization": "1/(n-1)", "demeaned": self.demean},
        )
