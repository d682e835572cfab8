"""
Combination-matrix estimators over the observable subnet
Granger, one-lag, residual and regularized Granger, plus exact error oracles

Features:
- Limiting estimators from exact correlations and sample estimators from empirical ones
- Granger error decomposition A_S + A_SS' (I - [A^2]_S')^{-1} [A^2]_S'S
- Truncated matrix-power series for the one-lag and residual errors
- Row-wise l1-constrained Chebyshev regression (linear program) for regularized Granger
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Union

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from combination import CombinationMatrix
from correlation import CorrelationPair, restrict
from graph_model import ObservationSet

logger = logging.getLogger(__name__)

L1_TOL = 1e-9
LP_TOL = 1e-9


class SingularSubmatrixError(RuntimeError):
    """[R_0]_S cannot be inverted."""


class SingularEmpiricalCorrelationError(RuntimeError):
    """Sample [R0_hat]_S is singular; more samples are needed."""


class SolverFailureError(RuntimeError):
    """The regularized Granger linear program did not converge."""


class EstimatorKind(str, Enum):
    GRANGER = "granger"
    ONE_LAG = "one_lag"
    RESIDUAL = "residual"
    REGULARIZED_GRANGER = "regularized_granger"


@dataclass(frozen=True)
class EstimateMatrix:
    """Estimated |S| x |S| combination submatrix."""

    values: np.ndarray
    kind: EstimatorKind
    source: str
    s_indices: Optional[ObservationSet] = None
    n_samples: Optional[int] = None
    info: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError(f"estimate must be square, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("estimate has non-finite entries")


@dataclass(frozen=True)
class GrangerErrorDecomposition:
    """Granger estimate split into A_S plus the latent-node error E = A_SS' H [A^2]_S'S."""

    a_s: np.ndarray
    error: np.ndarray
    h: np.ndarray
    c: np.ndarray
    latent: tuple

    @property
    def reconstruction(self) -> np.ndarray:
        return self.a_s + self.error


@dataclass(frozen=True)
class SeriesError:
    """Partial sum of an estimator's error series with its max-norm tail bound."""

    matrix: np.ndarray
    tail_bound: float
    k_max: int


def _as_array(a: Union[CombinationMatrix, np.ndarray]) -> np.ndarray:
    return a.a if isinstance(a, CombinationMatrix) else np.asarray(a, dtype=float)


def _rho_of(a: Union[CombinationMatrix, np.ndarray]) -> float:
    if isinstance(a, CombinationMatrix):
        return a.rho
    arr = np.asarray(a, dtype=float)
    return float(np.abs(arr).sum(axis=1).max()) if arr.size else 0.0


def _granger(r0s: np.ndarray, r1s: np.ndarray) -> np.ndarray:
    """[R_1]_S ([R_0]_S)^{-1} as a linear solve."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            return scipy.linalg.solve(r0s.T, r1s.T, assume_a="gen").T
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            raise SingularSubmatrixError(f"[R0]_S is singular or ill-conditioned: {exc}") from exc


def limiting_granger(r0: np.ndarray, r1: np.ndarray, s: ObservationSet) -> EstimateMatrix:
    """Granger estimator from exact correlations restricted to the probed nodes."""
    values = _granger(restrict(r0, s), restrict(r1, s))
    return EstimateMatrix(values=values, kind=EstimatorKind.GRANGER, source="exact", s_indices=s)


def limiting_one_lag(r1: np.ndarray, s: ObservationSet) -> EstimateMatrix:
    return EstimateMatrix(values=restrict(r1, s).copy(), kind=EstimatorKind.ONE_LAG,
                          source="exact", s_indices=s)


def limiting_residual(r0: np.ndarray, r1: np.ndarray, s: ObservationSet) -> EstimateMatrix:
    """[R_1]_S - [R_0]_S, which equals -sigma^2 [(I + A)^{-1}]_S."""
    values = restrict(r1, s) - restrict(r0, s)
    return EstimateMatrix(values=values, kind=EstimatorKind.RESIDUAL, source="exact", s_indices=s)


def residual_closed_form(a: Union[CombinationMatrix, np.ndarray], s: ObservationSet,
                         sigma: float) -> np.ndarray:
    """-sigma^2 [(I + A)^{-1}]_S; the inverse itself is the quantity of interest here."""
    arr = _as_array(a)
    inverse = scipy.linalg.inv(np.eye(arr.shape[0]) + arr)
    return -(sigma ** 2) * restrict(inverse, s)


def _chebyshev_row(r0s: np.ndarray, target: np.ndarray, max_iter: int):
    """
    min_x ||x R0 - target||_inf  s.t. ||x||_1 <= 1, with x = u - v, u, v >= 0.

    Variables are [u, v, t]; the objective is t.
    """
    size = r0s.shape[0]
    basis = r0s.T
    ones = np.ones((size, 1))
    a_ub = np.vstack([
        np.hstack([basis, -basis, -ones]),
        np.hstack([-basis, basis, -ones]),
        np.hstack([np.ones((1, 2 * size)), np.zeros((1, 1))]),
    ])
    b_ub = np.concatenate([target, -target, [1.0]])
    cost = np.zeros(2 * size + 1)
    cost[-1] = 1.0

    result = linprog(
        cost, A_ub=a_ub, b_ub=b_ub, bounds=(0, None), method="highs-ds",
        options={"maxiter": max_iter,
                 "primal_feasibility_tolerance": LP_TOL,
                 "dual_feasibility_tolerance": LP_TOL},
    )
    if result.status != 0:
        raise SolverFailureError(f"linear program failed (status {result.status}): {result.message}")

    x = result.x[:size] - result.x[size:2 * size]
    norm = np.abs(x).sum()
    if norm > 1.0:
        x = x / norm
    return x, float(np.abs(x @ r0s - target).max())


def regularized_granger(pair: CorrelationPair, max_iter: Optional[int] = None) -> EstimateMatrix:
    """
    Row-wise l1-constrained Chebyshev fit of [R1]_S against [R0]_S.

    Rows where the plain Granger solution already has l1 norm <= 1 are kept as-is
    (they attain objective zero, so both estimators coincide there); the remaining
    rows are solved as linear programs.

    Args:
        pair: restricted correlation pair (empirical or exact)
        max_iter: simplex iteration cap, default max(10 |S|, 100)

    Returns:
        EstimateMatrix; info holds per-row objectives and the rows solved by LP
    """
    r0s, r1s = pair.r0, pair.r1
    size = r0s.shape[0]
    if pair.n_samples is not None and pair.n_samples < 2:
        raise ValueError(f"need at least 2 samples, got {pair.n_samples}")
    cap = max_iter if max_iter is not None else max(10 * size, 100)

    plain = None
    if pair.n_samples is None or pair.n_samples > size:
        try:
            plain = _granger(r0s, r1s)
        except SingularSubmatrixError:
            logger.debug("plain Granger unavailable, solving every row by LP")

    values = np.empty((size, size))
    objectives = np.zeros(size)
    lp_rows = []
    for i in range(size):
        if plain is not None and np.abs(plain[i]).sum() <= 1.0:
            values[i] = plain[i]
            objectives[i] = float(np.abs(plain[i] @ r0s - r1s[i]).max())
            continue
        values[i], objectives[i] = _chebyshev_row(r0s, r1s[i], cap)
        lp_rows.append(i)

    if lp_rows:
        logger.debug("regularized Granger: %d of %d rows solved by LP (first vertex kept on ties)",
                     len(lp_rows), size)
    source = "sample" if pair.kind == "empirical" else "exact"
    return EstimateMatrix(
        values=values, kind=EstimatorKind.REGULARIZED_GRANGER, source=source,
        s_indices=pair.s_indices, n_samples=pair.n_samples,
        info={"objectives": objectives.tolist(), "lp_rows": lp_rows},
    )


def sample_estimator(kind: Union[EstimatorKind, str], pair: CorrelationPair) -> EstimateMatrix:
    """
    Apply an estimator formula to a restricted correlation pair.

    Empirical pairs give sample estimators; a restricted exact pair reproduces the
    limiting estimator exactly.
    """
    kind = EstimatorKind(kind)
    if pair.s_indices is None and pair.kind == "exact":
        raise ValueError("exact pairs must be restricted to S before estimation")
    source = "sample" if pair.kind == "empirical" else "exact"

    if kind is EstimatorKind.REGULARIZED_GRANGER:
        return regularized_granger(pair)
    if kind is EstimatorKind.GRANGER:
        if pair.n_samples is not None and pair.n_samples <= pair.size:
            raise SingularEmpiricalCorrelationError(
                f"n={pair.n_samples} samples <= |S|={pair.size}: [R0_hat]_S is rank deficient"
            )
        try:
            values = _granger(pair.r0, pair.r1)
        except SingularSubmatrixError as exc:
            if pair.kind == "empirical":
                raise SingularEmpiricalCorrelationError(str(exc)) from exc
            raise
    elif kind is EstimatorKind.ONE_LAG:
        values = pair.r1.copy()
    else:
        values = pair.r1 - pair.r0
    return EstimateMatrix(values=values, kind=kind, source=source,
                          s_indices=pair.s_indices, n_samples=pair.n_samples)


def estimate(kind: Union[EstimatorKind, str], pair: CorrelationPair,
             s: Optional[ObservationSet] = None) -> EstimateMatrix:
    """Dispatch any pair (restricting an exact N x N pair to s first)."""
    if pair.s_indices is None:
        if s is None:
            raise ValueError("an unrestricted pair needs the observation set")
        pair = pair.restricted(s)
    return sample_estimator(kind, pair)


def granger_error_decomposition(a: Union[CombinationMatrix, np.ndarray],
                                s: ObservationSet) -> GrangerErrorDecomposition:
    """
    Split the limiting Granger estimator into A_S and the latent-node error.

    E = A_SS' H [A^2]_S'S with H = (I - C)^{-1}, C = [A^2]_S'.
    """
    arr = _as_array(a)
    observed = s.as_array()
    latent = np.asarray(s.complement(), dtype=np.intp)
    a_s = arr[np.ix_(observed, observed)].copy()

    if latent.size == 0:
        empty = np.zeros((0, 0))
        return GrangerErrorDecomposition(a_s=a_s, error=np.zeros_like(a_s), h=empty, c=empty, latent=())

    a2 = arr @ arr
    c = a2[np.ix_(latent, latent)]
    system = np.eye(latent.size) - c
    h = scipy.linalg.solve(system, np.eye(latent.size), assume_a="gen")
    right = scipy.linalg.solve(system, a2[np.ix_(latent, observed)], assume_a="gen")
    error = arr[np.ix_(observed, latent)] @ right
    return GrangerErrorDecomposition(a_s=a_s, error=error, h=h, c=c,
                                     latent=tuple(int(i) for i in latent))


def default_k_max(rho: float) -> int:
    """Truncation order making the geometric tail smaller than 1e-10."""
    if rho <= 0.0:
        return 1
    return max(1, math.ceil(math.log(1e-10 * (1.0 - rho)) / (2.0 * math.log(rho))))


def series_error(kind: Union[EstimatorKind, str], a: Union[CombinationMatrix, np.ndarray],
                 s: ObservationSet, k_max: Optional[int] = None) -> SeriesError:
    """
    Truncated error series of the one-lag or residual estimator, restricted to S.

    one_lag:  sum_{h=1..k} A^{2h+1}
    residual: sum_{h=1..k} (A^{2h+1} - A^{2h})

    The tail bound rho^{2k+1} / (1 - rho) holds in max-norm for both.
    """
    kind = EstimatorKind(kind)
    if kind not in (EstimatorKind.ONE_LAG, EstimatorKind.RESIDUAL):
        raise ValueError(f"series error is defined for one_lag and residual, not {kind.value}")
    arr = _as_array(a)
    rho = _rho_of(a)
    k = default_k_max(rho) if k_max is None else k_max
    if k < 1:
        raise ValueError(f"k_max must be at least 1, got {k}")

    a2 = arr @ arr
    even = np.eye(arr.shape[0])
    total = np.zeros_like(arr)
    for _ in range(k):
        even = even @ a2
        odd = even @ arr
        total += odd if kind is EstimatorKind.ONE_LAG else odd - even

    tail = 0.0 if rho <= 0.0 else rho ** (2 * k + 1) / (1.0 - rho)
    return SeriesError(matrix=restrict(total, s), tail_bound=tail, k_max=k)
