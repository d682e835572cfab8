"""
Combination matrices for diffusion networks
Laplacian and Metropolis weight policies, CTA scaling and regular-diffusion validation
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Union

import numpy as np

from graph_model import DegreeProfile, Graph, degrees

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12


class NegativeSelfWeightError(ValueError):
    """A policy produced off-diagonal weights exceeding rho on some row."""


class NotStochasticError(ValueError):
    """Matrix is not right-stochastic (nonnegative with unit row sums)."""


@dataclass(frozen=True)
class CombinationPolicy:
    """
    Rule pi(.) mapping a graph to a combination matrix.

    kind: "laplacian", "metropolis" or "custom". A custom rule is a callable
    (graph, degree profile) -> off-diagonal weight matrix and must declare its kappa.
    """

    kind: str
    rho: float
    lam: float = 1.0
    custom_rule: Optional[Callable[[Graph, DegreeProfile], np.ndarray]] = field(default=None, compare=False)
    custom_kappa: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")
        if self.kind not in ("laplacian", "metropolis", "custom"):
            raise ValueError(f"unknown policy kind '{self.kind}'")
        if self.kind == "custom" and (self.custom_rule is None or self.custom_kappa is None):
            raise ValueError("custom policy needs both a rule and a kappa")

    @classmethod
    def laplacian(cls, rho: float, lam: float) -> "CombinationPolicy":
        return cls(kind="laplacian", rho=rho, lam=lam)

    @classmethod
    def metropolis(cls, rho: float) -> "CombinationPolicy":
        return cls(kind="metropolis", rho=rho)

    @classmethod
    def custom(cls, rule: Callable[[Graph, DegreeProfile], np.ndarray],
               rho: float, kappa: float) -> "CombinationPolicy":
        return cls(kind="custom", rho=rho, custom_rule=rule, custom_kappa=kappa)

    @property
    def kappa(self) -> float:
        if self.kind == "laplacian":
            return self.rho * self.lam
        if self.kind == "metropolis":
            return self.rho
        return float(self.custom_kappa)

    def to_dict(self) -> Dict:
        if self.kind == "custom":
            raise ValueError("custom policies hold a callable and cannot be serialized")
        data = {"kind": self.kind, "rho": self.rho}
        if self.kind == "laplacian":
            data["lam"] = self.lam
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "CombinationPolicy":
        kind = data.get("kind")
        if kind == "laplacian":
            return cls.laplacian(float(data["rho"]), float(data["lam"]))
        if kind == "metropolis":
            return cls.metropolis(float(data["rho"]))
        raise ValueError(f"policy kind must be 'laplacian' or 'metropolis', got {kind!r}")


@dataclass(frozen=True)
class CombinationMatrix:
    """Symmetric nonnegative matrix A with row sums rho and sandwich constant kappa."""

    a: np.ndarray
    rho: float
    kappa: float

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass
class Violation:
    """One violated regular-diffusion invariant, with its worst offender."""

    kind: str
    i: int
    j: int
    magnitude: float


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> List[str]:
        return [v.kind for v in self.violations]


def _off_diagonal_weights(g: Graph, profile: DegreeProfile, policy: CombinationPolicy) -> np.ndarray:
    adj = g.adj.astype(float)
    if policy.kind == "laplacian":
        return policy.rho * policy.lam * adj / profile.d_max
    if policy.kind == "metropolis":
        pair_max = np.maximum.outer(profile.degrees, profile.degrees)
        return policy.rho * adj / pair_max
    weights = np.array(policy.custom_rule(g, profile), dtype=float)
    np.fill_diagonal(weights, 0.0)
    return weights


def apply_policy(g: Graph, policy: CombinationPolicy) -> CombinationMatrix:
    """
    Build the combination matrix of a graph under a weight policy.

    Off-diagonal entries follow the rule; each self-weight is rho minus the
    off-diagonal row sum, so every row sums to rho.

    Args:
        g: network graph
        policy: Laplacian, Metropolis or custom rule

    Returns:
        CombinationMatrix with kappa derived from the policy
    """
    profile = degrees(g)
    a = _off_diagonal_weights(g, profile, policy)

    self_weights = policy.rho - a.sum(axis=1)
    worst = int(np.argmin(self_weights))
    if self_weights[worst] < -ROW_SUM_TOL:
        raise NegativeSelfWeightError(
            f"row {worst} has self-weight {self_weights[worst]:.3e} < 0 under policy '{policy.kind}'"
        )
    np.fill_diagonal(a, np.maximum(self_weights, 0.0))

    # absorb floating-point residue into the diagonal
    residue = policy.rho - a.sum(axis=1)
    a[np.diag_indices_from(a)] += residue

    return CombinationMatrix(a=a, rho=policy.rho, kappa=policy.kappa)


def cta_weights(w: np.ndarray, mu: float) -> np.ndarray:
    """
    Scaled combination matrix (1 - mu) * W of an adapt-then-combine scheme.

    Args:
        w: right-stochastic nonnegative matrix
        mu: step size in (0, 1)

    Returns:
        Matrix with row sums rho = 1 - mu
    """
    w = np.asarray(w, dtype=float)
    if not 0.0 < mu < 1.0:
        raise ValueError(f"step size must lie in (0, 1), got {mu}")
    if np.any(w < 0):
        raise NotStochasticError("combination weights must be nonnegative")
    row_error = np.abs(w.sum(axis=1) - 1.0)
    if np.any(row_error > ROW_SUM_TOL):
        bad = int(np.argmax(row_error))
        raise NotStochasticError(f"row {bad} sums to {w[bad].sum():.15g}, expected 1")
    return (1.0 - mu) * w


def validate_regular(a: Union[np.ndarray, CombinationMatrix], g: Graph,
                     rho: float, kappa: float, tol: float = ROW_SUM_TOL) -> ValidationReport:
    """
    Check the regular-diffusion invariants and report the worst offender of each.

    Checked: symmetry, row sums equal to rho, support matching the graph,
    the kappa/d_max <= a_ij <= kappa/d_min sandwich, and nonnegative self-weights.
    """
    a = a.a if isinstance(a, CombinationMatrix) else np.asarray(a, dtype=float)
    if a.shape != g.adj.shape:
        raise ValueError(f"matrix shape {a.shape} does not match graph size {g.n}")

    report = ValidationReport()
    profile = degrees(g)
    off = ~np.eye(g.n, dtype=bool)
    edge = (g.adj == 1) & off
    non_edge = (g.adj == 0) & off

    def _record(kind: str, excess: np.ndarray):
        if excess.size and excess.max() > tol:
            i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
            report.violations.append(Violation(kind, int(i), int(j), float(excess[i, j])))

    _record("symmetry", np.abs(a - a.T))

    row_error = np.abs(a.sum(axis=1) - rho)
    if row_error.max() > tol:
        i = int(np.argmax(row_error))
        report.violations.append(Violation("row_sum", i, i, float(row_error[i])))

    _record("support", np.where(non_edge, np.abs(a), 0.0))
    _record("missing_edge", np.where(edge, (a <= 0).astype(float), 0.0))

    lower = kappa / profile.d_max
    upper = kappa / profile.d_min
    _record("sandwich_lower", np.where(edge, lower - a, 0.0))
    _record("sandwich_upper", np.where(edge, a - upper, 0.0))

    diag = np.diag(a)
    if diag.min() < -tol:
        i = int(np.argmin(diag))
        report.violations.append(Violation("negative_self_weight", i, i, float(-diag[i])))

    if report.violations:
        logger.debug("regular-diffusion check found %d violation(s): %s",
                     len(report.violations), report.kinds())
    return report
