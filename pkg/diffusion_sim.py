"""
Diffusion simulator
First-order vector autoregression y_n = A y_{n-1} + sigma x_n with Gaussian input

The state is started from its stationary law N(0, sigma^2 (I - A^2)^{-1}) so no
transient has to be discarded. Random draws are consumed in a fixed order:
first N standard normals for the initial state, then one N-vector per time step.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, Optional, Union

import numpy as np
import scipy.linalg

from combination import CombinationMatrix
from graph_model import ObservationSet, SeedLike, make_rng

logger = logging.getLogger(__name__)

DEFAULT_CHUNK = 4096


class FactorizationError(RuntimeError):
    """Stationary covariance is not numerically positive definite."""


@dataclass(frozen=True)
class DiffusionConfig:
    """
    Simulation settings.

    burn_in is used only when stationary is False (state started at zero).
    """

    sigma: float
    n_samples: int
    burn_in: int = 0
    stationary: bool = True

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be at least 1, got {self.n_samples}")
        if self.burn_in < 0:
            raise ValueError(f"burn_in must be nonnegative, got {self.burn_in}")


@dataclass(frozen=True)
class SampleBlock:
    """Observed outputs: row l holds node s_indices[l], column i holds time i+1."""

    s_indices: ObservationSet
    data: np.ndarray
    sigma: float
    seed: Optional[int] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or data.shape[0] != self.s_indices.size:
            raise ValueError(
                f"sample block shape {data.shape} does not match |S|={self.s_indices.size}"
            )
        object.__setattr__(self, "data", data)

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


def _as_array(a: Union[CombinationMatrix, np.ndarray]) -> np.ndarray:
    return a.a if isinstance(a, CombinationMatrix) else np.asarray(a, dtype=float)


def _stationary_start(a: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Draw y_0 ~ N(0, sigma^2 (I - A^2)^{-1}) without forming the inverse."""
    n = a.shape[0]
    z = rng.standard_normal(n)
    gram = np.eye(n) - a @ a
    try:
        upper = scipy.linalg.cholesky(gram, lower=False)
        return sigma * scipy.linalg.solve_triangular(upper, z, lower=False)
    except np.linalg.LinAlgError:
        logger.debug("Cholesky of I - A^2 failed, falling back to eigendecomposition")

    eigvals, eigvecs = scipy.linalg.eigh((gram + gram.T) / 2.0)
    if eigvals.min() <= np.finfo(float).eps * n:
        raise FactorizationError(
            f"I - A^2 is not positive definite (min eigenvalue {eigvals.min():.3e}); A is not stable"
        )
    return sigma * (eigvecs @ (z / np.sqrt(eigvals)))


def stream(a: Union[CombinationMatrix, np.ndarray], cfg: DiffusionConfig,
           s: Optional[ObservationSet], seed: SeedLike,
           chunk_size: int = DEFAULT_CHUNK) -> Iterator[np.ndarray]:
    """
    Run the recursion and yield observed columns in chunks.

    Args:
        a: stable combination matrix
        cfg: simulation settings
        s: probed nodes, or None for every node
        seed: seed or stream handle
        chunk_size: time steps per yielded block

    Yields:
        Arrays of shape (|S|, <= chunk_size), consecutive in time
    """
    a = _as_array(a)
    n_nodes = a.shape[0]
    rows = np.arange(n_nodes) if s is None else s.as_array()
    rng = make_rng(seed)

    if cfg.stationary:
        y = _stationary_start(a, cfg.sigma, rng)
    else:
        y = np.zeros(n_nodes)
        for _ in range(cfg.burn_in):
            y = a @ y + cfg.sigma * rng.standard_normal(n_nodes)

    remaining = cfg.n_samples
    while remaining > 0:
        steps = min(chunk_size, remaining)
        noise = cfg.sigma * rng.standard_normal((steps, n_nodes))
        out = np.empty((rows.size, steps))
        for t in range(steps):
            y = a @ y + noise[t]
            out[:, t] = y[rows]
        remaining -= steps
        yield out


def simulate(a: Union[CombinationMatrix, np.ndarray], cfg: DiffusionConfig,
             s: ObservationSet, seed: SeedLike) -> SampleBlock:
    """
    Simulate the diffusion and keep only the probed rows.

    Returns:
        SampleBlock with |S| rows and cfg.n_samples columns (y_1 ... y_n)
    """
    data = np.concatenate(list(stream(a, cfg, s, seed)), axis=1)
    seed_label = seed if isinstance(seed, (int, np.integer)) else None
    return SampleBlock(s_indices=s, data=data, sigma=cfg.sigma, seed=seed_label)


def simulate_full(a: Union[CombinationMatrix, np.ndarray], cfg: DiffusionConfig,
                  seed: SeedLike) -> np.ndarray:
    """Full-observability run: N x n matrix of every node's output."""
    return np.concatenate(list(stream(a, cfg, None, seed)), axis=1)
