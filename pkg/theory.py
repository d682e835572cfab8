"""
Asymptotic predictions for the structural estimators
Closed-form bias and identifiability gap per estimator, and the sample-size law
"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple, Union

from estimators import EstimatorKind
from graph_model import ConnectionRegime


class ParameterDomainError(ValueError):
    """Model parameters outside the domain of the closed forms."""


@dataclass(frozen=True)
class ConsistencyPrediction:
    """Limiting bias eta and gap gamma of the scaled estimate entries."""

    estimator: EstimatorKind
    eta: float
    gamma: float
    rho: float
    kappa: float
    xi: float
    p: float
    sigma2: float

    @property
    def eta_plus_gamma(self) -> float:
        return self.eta + self.gamma

    @staticmethod
    def s_of(n_nodes: int, p_n: float) -> float:
        """Scaling sequence s_N = N p_N."""
        return n_nodes * p_n

    def to_dict(self) -> Dict:
        return {
            "estimator": self.estimator.value,
            "eta": self.eta,
            "gamma": self.gamma,
            "rho": self.rho,
            "kappa": self.kappa,
            "xi": self.xi,
            "p": self.p,
            "sigma2": self.sigma2,
        }


def _check_domain(rho: float, kappa: float, xi: float, p: float, sigma2: float):
    if not 0.0 < kappa <= rho < 1.0:
        raise ParameterDomainError(f"need 0 < kappa <= rho < 1, got rho={rho}, kappa={kappa}")
    if not 0.0 <= xi < 1.0:
        raise ParameterDomainError(f"need 0 <= xi < 1, got xi={xi}")
    if not 0.0 <= p <= 1.0:
        raise ParameterDomainError(f"need 0 <= p <= 1, got p={p}")
    if sigma2 <= 0.0:
        raise ParameterDomainError(f"need sigma^2 > 0, got {sigma2}")


def predict(kind: Union[EstimatorKind, str], rho: float, kappa: float, xi: float,
            p: float, sigma2: float = 1.0) -> ConsistencyPrediction:
    """
    Evaluate the bias and gap of an estimator.

    Granger depends on xi but not on sigma^2; one-lag and residual scale with
    sigma^2 and ignore xi. The regularized Granger estimator shares the Granger limit.

    Args:
        kind: estimator
        rho: row sum of A
        kappa: sandwich constant, 0 < kappa <= rho
        xi: fraction of probed nodes
        p: connection probability
        sigma2: noise variance

    Returns:
        ConsistencyPrediction
    """
    kind = EstimatorKind(kind)
    _check_domain(rho, kappa, xi, p, sigma2)

    if kind in (EstimatorKind.GRANGER, EstimatorKind.REGULARIZED_GRANGER):
        denom = 1.0 - (rho ** 2 - 2.0 * rho * kappa * xi + kappa ** 2 * xi)
        eta = kappa ** 2 * p * (2.0 * rho - kappa) * (1.0 - xi) / denom
        gamma = kappa
    elif kind is EstimatorKind.ONE_LAG:
        zeta = rho - kappa
        eta = (sigma2 * kappa ** 2 * p * (rho + rho * zeta ** 2 + 2.0 * zeta)
               / ((1.0 - rho ** 2) * (1.0 - zeta ** 2) ** 2))
        gamma = sigma2 * kappa * (1.0 + zeta ** 2) / (1.0 - zeta ** 2) ** 2
    else:
        shift = 1.0 + rho - kappa
        eta = -sigma2 * kappa ** 2 * p / ((1.0 + rho) * shift ** 2)
        gamma = sigma2 * kappa / shift ** 2

    return ConsistencyPrediction(estimator=kind, eta=eta, gamma=gamma, rho=rho, kappa=kappa,
                                 xi=xi, p=p, sigma2=sigma2)


def predict_for_size(kind: Union[EstimatorKind, str], regime: ConnectionRegime, n_nodes: int,
                     rho: float, kappa: float, xi: float, sigma2: float = 1.0) -> ConsistencyPrediction:
    """Finite-N reading of the prediction with p replaced by p_N."""
    return predict(kind, rho, kappa, xi, regime.p_of(n_nodes), sigma2)


def observed_size(n_nodes: int, xi: float) -> int:
    """|S| = round(xi N), half rounded up."""
    return int(math.floor(xi * n_nodes + 0.5))


@dataclass(frozen=True)
class SampleSchedule:
    """
    n(N) = round(c (N p_N)^2 log |S(N)|), with c fixed so that n(N_ref) = n_ref.

    |S(N)| comes from xi unless an explicit s_of is given; keep s_of a module-level
    function when the schedule must cross process boundaries.
    """

    n_ref: int
    n_nodes_ref: int
    regime: ConnectionRegime
    xi: float = 0.0
    s_of: Optional[Callable[[int], int]] = None

    def __post_init__(self):
        if self.n_ref < 2:
            raise ValueError(f"reference sample count must be at least 2, got {self.n_ref}")
        if self.s_of is None and not 0.0 < self.xi < 1.0:
            raise ValueError(f"schedule needs 0 < xi < 1 or an explicit s_of, got xi={self.xi}")

    def _growth(self, n_nodes: int) -> float:
        size = self.s_of(n_nodes) if self.s_of is not None else observed_size(n_nodes, self.xi)
        if size < 2:
            raise ValueError(f"|S|={size} at N={n_nodes} makes log |S| degenerate")
        return (n_nodes * self.regime.p_of(n_nodes)) ** 2 * math.log(size)

    @property
    def constant(self) -> float:
        return self.n_ref / self._growth(self.n_nodes_ref)

    def __call__(self, n_nodes: int) -> int:
        if n_nodes == self.n_nodes_ref:
            return int(self.n_ref)
        return max(2, int(round(self.constant * self._growth(n_nodes))))

    def to_dict(self) -> Dict:
        """Calibration point in config form; regime and xi live on the experiment."""
        return {"n_ref": int(self.n_ref), "n_nodes_ref": int(self.n_nodes_ref)}


def sample_schedule(n_ref: int, n_nodes_ref: int, regime: ConnectionRegime,
                    s_of: Union[float, Callable[[int], int]]) -> SampleSchedule:
    """Build the calibrated schedule; s_of is either xi or a callable N -> |S|."""
    if callable(s_of):
        return SampleSchedule(n_ref=n_ref, n_nodes_ref=n_nodes_ref, regime=regime, s_of=s_of)
    return SampleSchedule(n_ref=n_ref, n_nodes_ref=n_nodes_ref, regime=regime, xi=float(s_of))


def within_band(value: float, target: float, rel: float = 0.15, floor: float = 0.05) -> bool:
    """|value - target| <= rel * max(|target|, floor)."""
    return abs(value - target) <= rel * max(abs(target), floor)


def band_limits(target: float, rel: float = 0.15, slack: float = 0.05) -> Tuple[float, float]:
    """Band [target - rel |target| - slack, target + rel |target| + slack]."""
    width = rel * abs(target) + slack
    return target - width, target + width
