"""
Monte Carlo experiment engine
Sweeps network sizes, runs graph -> matrix -> simulate -> estimate -> cluster
pipelines and aggregates recovery probabilities and margin statistics

Features:
- Per-run random streams keyed on (N, run index), independent of scheduling
- Process pool over Monte Carlo runs; threads=1 runs inline
- Streaming correlation accumulation so N x n sample matrices are never stored
- Presets for the dense Metropolis, dense Laplacian and sparse Laplacian setups
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from clustering import cluster_matrix, margins, recovery_indicator
from combination import CombinationMatrix, CombinationPolicy, apply_policy
from correlation import CorrelationAccumulator, CorrelationPair, exact_pair
from data_manager import ConfigError
from diffusion_sim import DiffusionConfig, stream
from estimators import EstimatorKind, estimate
from evaluation import RecoveryEvaluator
from graph_model import ConnectionRegime, Graph, ObservationSet, generate_er, sample_observation_set
from theory import SampleSchedule, band_limits, predict_for_size

logger = logging.getLogger(__name__)

SOURCES = ("exact", "sample")


@dataclass(frozen=True)
class EstimatorSpec:
    """An estimator fed by exact or sample correlations."""

    kind: EstimatorKind
    source: str

    def __post_init__(self):
        object.__setattr__(self, "kind", EstimatorKind(self.kind))
        if self.source not in SOURCES:
            raise ValueError(f"source must be 'exact' or 'sample', got {self.source!r}")
        if self.kind is EstimatorKind.REGULARIZED_GRANGER and self.source != "sample":
            raise ValueError("regularized_granger works on sample correlations only")

    @property
    def label(self) -> str:
        return f"{self.kind.value}/{self.source}"

    def to_dict(self) -> Dict:
        return {"kind": self.kind.value, "source": self.source}


@dataclass
class ExperimentConfig:
    """Resolved settings of one sweep."""

    regime: ConnectionRegime
    policy: CombinationPolicy
    xi: float
    sigma: float = 1.0
    n_sweep: List[int] = field(default_factory=lambda: [100, 200, 400, 800])
    estimators: List[EstimatorSpec] = field(default_factory=list)
    schedule: Optional[SampleSchedule] = None
    mc_runs: int = 100
    master_seed: int = 0
    output_dir: Optional[str] = None
    threads: Optional[int] = None
    record_timing: bool = False
    demean: bool = False
    name: str = "experiment"

    def __post_init__(self):
        if not self.n_sweep:
            raise ConfigError("sweep must list at least one network size", field="n_sweep")
        if any(b <= a for a, b in zip(self.n_sweep, self.n_sweep[1:])):
            raise ConfigError(f"sizes must be strictly increasing, got {self.n_sweep}", field="n_sweep")
        if self.mc_runs < 1:
            raise ConfigError(f"need at least one Monte Carlo run, got {self.mc_runs}", field="mc_runs")
        if not self.estimators:
            raise ConfigError("no estimators selected", field="estimators")
        if not 0.0 < self.xi < 1.0:
            raise ConfigError(f"xi must lie in (0, 1), got {self.xi}", field="xi")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}", field="sigma")
        if self.needs_samples and self.schedule is None:
            raise ConfigError("sample-source estimators need a sample schedule", field="schedule")

    @property
    def needs_samples(self) -> bool:
        return any(spec.source == "sample" for spec in self.estimators)

    @property
    def needs_exact(self) -> bool:
        return any(spec.source == "exact" for spec in self.estimators)

    @classmethod
    def from_dict(cls, data: Dict) -> "ExperimentConfig":
        """
        Build a config from its snake_case JSON form.

        Raises:
            ConfigError: naming the offending field
        """
        known = {"regime", "policy", "xi", "sigma", "n_sweep", "estimators", "schedule",
                 "mc_runs", "master_seed", "output_dir", "threads", "record_timing",
                 "demean", "name"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown keys {unknown}", field=unknown[0])
        for required in ("regime", "policy", "xi", "estimators"):
            if required not in data:
                raise ConfigError("missing required key", field=required)

        def _parse(key, fn):
            try:
                return fn(data[key])
            except ConfigError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(str(exc), field=key) from exc

        regime = _parse("regime", ConnectionRegime.from_dict)
        xi = _parse("xi", float)
        schedule = None
        if data.get("schedule") is not None:
            schedule = _parse("schedule", lambda s: SampleSchedule(
                n_ref=int(s["n_ref"]), n_nodes_ref=int(s["n_nodes_ref"]), regime=regime, xi=xi))

        return cls(
            regime=regime,
            policy=_parse("policy", CombinationPolicy.from_dict),
            xi=xi,
            sigma=_parse("sigma", float) if "sigma" in data else 1.0,
            n_sweep=_parse("n_sweep", lambda v: [int(n) for n in v]) if "n_sweep" in data else [100, 200, 400, 800],
            estimators=_parse("estimators", lambda v: [EstimatorSpec(e["kind"], e.get("source", "exact")) for e in v]),
            schedule=schedule,
            mc_runs=_parse("mc_runs", int) if "mc_runs" in data else 100,
            master_seed=_parse("master_seed", int) if "master_seed" in data else 0,
            output_dir=data.get("output_dir"),
            threads=_parse("threads", int) if data.get("threads") is not None else None,
            record_timing=bool(data.get("record_timing", False)),
            demean=bool(data.get("demean", False)),
            name=str(data.get("name", "experiment")),
        )

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "regime": self.regime.to_dict(),
            "policy": self.policy.to_dict(),
            "xi": self.xi,
            "sigma": self.sigma,
            "n_sweep": list(self.n_sweep),
            "estimators": [spec.to_dict() for spec in self.estimators],
            "schedule": None if self.schedule is None else self.schedule.to_dict(),
            "mc_runs": self.mc_runs,
            "master_seed": self.master_seed,
            "output_dir": self.output_dir,
            "threads": self.threads,
            "record_timing": self.record_timing,
            "demean": self.demean,
        }


@dataclass
class RunInstance:
    """Everything drawn for one (N, run) pair."""

    n_nodes: int
    run: int
    p: float
    graph: Graph
    a: CombinationMatrix
    s: ObservationSet
    truth: np.ndarray
    pairs: Dict[str, CorrelationPair]
    n_samples: Optional[int]


@dataclass
class ExperimentResult:
    table: pd.DataFrame
    records: List[Dict]
    manifest: Dict


@dataclass
class MarginStudy:
    table: pd.DataFrame
    eta: float
    eta_plus_gamma: float
    report: Dict


def run_seeds(master_seed: int, n_nodes: int, run: int) -> List[np.random.SeedSequence]:
    """Independent graph, observation and simulation streams of one run."""
    root = np.random.SeedSequence(master_seed, spawn_key=(n_nodes, run))
    return root.spawn(3)


def build_instance(cfg: ExperimentConfig, n_nodes: int, run: int,
                   sources: Tuple[str, ...] = SOURCES) -> RunInstance:
    """Draw the graph, matrix and probed set of a run and compute the requested correlations."""
    graph_seed, subset_seed, sim_seed = run_seeds(cfg.master_seed, n_nodes, run)
    p = cfg.regime.p_of(n_nodes)
    g = generate_er(n_nodes, p, graph_seed)
    a = apply_policy(g, cfg.policy)
    s = sample_observation_set(n_nodes, cfg.xi, subset_seed)

    pairs: Dict[str, CorrelationPair] = {}
    n_samples = None
    if "exact" in sources:
        pairs["exact"] = exact_pair(a, cfg.sigma).restricted(s)
    if "sample" in sources:
        n_samples = cfg.schedule(n_nodes)
        acc = CorrelationAccumulator(s, demean=cfg.demean)
        for chunk in stream(a, DiffusionConfig(sigma=cfg.sigma, n_samples=n_samples), s, sim_seed):
            acc.update(chunk)
        pairs["sample"] = acc.result()

    return RunInstance(n_nodes=n_nodes, run=run, p=p, graph=g, a=a, s=s,
                       truth=g.subgraph(s), pairs=pairs, n_samples=n_samples)


def _failed_record(spec: EstimatorSpec, n_nodes: int, run: int, n_samples: Optional[int],
                   wall_ms: float) -> Dict:
    return {"N": n_nodes, "estimator": spec.kind.value, "source": spec.source, "run": run,
            "n_samples": n_samples, "recovered": False, "failed": True,
            "scaled_delta_high": np.nan, "scaled_Delta_low": np.nan, "wall_ms": wall_ms}


def _run_single(cfg: ExperimentConfig, n_nodes: int, run: int) -> List[Dict]:
    """One Monte Carlo run; returns one record per estimator. Module-level so it pickles."""
    sources = tuple(src for src in SOURCES if any(spec.source == src for spec in cfg.estimators))
    start = time.perf_counter()
    try:
        inst = build_instance(cfg, n_nodes, run, sources)
    except Exception as exc:
        logger.warning("N=%d run=%d failed while building the instance: %s", n_nodes, run, exc)
        elapsed = (time.perf_counter() - start) * 1000.0
        # the schedule itself may be what failed
        return [_failed_record(spec, n_nodes, run, None, elapsed) for spec in cfg.estimators]
    setup_ms = (time.perf_counter() - start) * 1000.0

    records = []
    for spec in cfg.estimators:
        n_samples = inst.n_samples if spec.source == "sample" else None
        tic = time.perf_counter()
        try:
            est = estimate(spec.kind, inst.pairs[spec.source])
            clustered = cluster_matrix(est)
            report = margins(est, inst.a, n_nodes, inst.p)
            recovered = recovery_indicator(clustered.adjacency, inst.truth)
        except Exception as exc:
            logger.warning("N=%d run=%d estimator=%s failed: %s", n_nodes, run, spec.label, exc)
            records.append(_failed_record(spec, n_nodes, run, n_samples,
                                          setup_ms + (time.perf_counter() - tic) * 1000.0))
            continue
        records.append({
            "N": n_nodes, "estimator": spec.kind.value, "source": spec.source, "run": run,
            "n_samples": n_samples, "recovered": recovered, "failed": False,
            "scaled_delta_high": report.scaled_delta_high,
            "scaled_Delta_low": report.scaled_Delta_low,
            "wall_ms": setup_ms + (time.perf_counter() - tic) * 1000.0,
        })
    return records


def _run_single_packed(args) -> List[Dict]:
    return _run_single(*args)


class ExperimentEngine:
    """
    Runs a sweep over network sizes and aggregates recovery statistics.
    """

    def __init__(self, cfg: ExperimentConfig, threads: Optional[int] = None):
        """
        Initialize the engine.

        Args:
            cfg: resolved experiment configuration
            threads: worker processes (falls back to cfg.threads, then 1)
        """
        self.cfg = cfg
        self.threads = max(1, threads or cfg.threads or 1)
        self.evaluator: Optional[RecoveryEvaluator] = None

    def predictions(self) -> Dict:
        """Theory (eta, gamma) per (N, estimator) at p = p_N."""
        predictions = {}
        for n_nodes in self.cfg.n_sweep:
            for spec in self.cfg.estimators:
                try:
                    predictions[(n_nodes, spec.kind.value)] = predict_for_size(
                        spec.kind, self.cfg.regime, n_nodes, self.cfg.policy.rho,
                        self.cfg.policy.kappa, self.cfg.xi, self.cfg.sigma ** 2)
                except ValueError as exc:
                    logger.debug("no prediction for N=%d %s: %s", n_nodes, spec.label, exc)
        return predictions

    def _records_for(self, n_nodes: int, executor: Optional[ProcessPoolExecutor]) -> List[Dict]:
        tasks = [(self.cfg, n_nodes, run) for run in range(self.cfg.mc_runs)]
        if executor is None:
            batches = map(_run_single_packed, tasks)
        else:
            batches = executor.map(_run_single_packed, tasks)
        return [record for batch in batches for record in batch]

    def run(self) -> ExperimentResult:
        """
        Execute the sweep.

        Returns:
            ExperimentResult with the aggregated table, per-run records and a manifest
        """
        self.evaluator = RecoveryEvaluator()
        timings = {}
        executor = ProcessPoolExecutor(max_workers=self.threads) if self.threads > 1 else None
        try:
            for n_nodes in self.cfg.n_sweep:
                tic = time.perf_counter()
                records = self._records_for(n_nodes, executor)
                self.evaluator.add_records(records)
                timings[str(n_nodes)] = round((time.perf_counter() - tic) * 1000.0, 3)
                failures = sum(r["failed"] for r in records)
                logger.info("N=%d: %d runs x %d estimators done (%d failed) in %.1f s",
                            n_nodes, self.cfg.mc_runs, len(self.cfg.estimators), failures,
                            timings[str(n_nodes)] / 1000.0)
        finally:
            if executor is not None:
                executor.shutdown()

        table = self.evaluator.aggregate(self.cfg.master_seed, self.predictions(),
                                         record_timing=self.cfg.record_timing)
        manifest = {
            "config": self.cfg.to_dict(),
            "threads": self.threads,
            "wall_ms_per_N": timings,
            "report": self.evaluator.generate_evaluation_report(table),
        }
        return ExperimentResult(table=table, records=self.evaluator.records, manifest=manifest)

    def run_margin_study(self, n_nodes: int, spec: EstimatorSpec, run: int = 0) -> MarginStudy:
        """
        Per-entry scatter of one run: true a_ij against the scaled estimate.

        Off-diagonal entries of A_S are listed column by column, then stably
        reordered so disconnected pairs come first.
        """
        inst = build_instance(self.cfg, n_nodes, run, (spec.source,))
        est = estimate(spec.kind, inst.pairs[spec.source])
        scale = n_nodes * inst.p
        prediction = predict_for_size(spec.kind, self.cfg.regime, n_nodes, self.cfg.policy.rho,
                                      self.cfg.policy.kappa, self.cfg.xi, self.cfg.sigma ** 2)

        size = inst.s.size
        a_s = inst.a.a[np.ix_(inst.s.as_array(), inst.s.as_array())]
        cols, rows = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
        cols, rows = cols.ravel(), rows.ravel()
        keep = rows != cols
        rows, cols = rows[keep], cols[keep]
        nodes = np.asarray(inst.s.indices)

        table = pd.DataFrame({
            "i": nodes[rows],
            "j": nodes[cols],
            "true_a": a_s[rows, cols],
            "scaled_estimate": scale * est.values[rows, cols],
            "class": np.where(a_s[rows, cols] > 0, "connected", "disconnected"),
        })
        table["_order"] = (table["class"] == "connected").astype(int)
        table = table.sort_values("_order", kind="stable").drop(columns="_order").reset_index(drop=True)
        table.insert(0, "pair_index", np.arange(len(table)))
        table["eta_theory"] = prediction.eta
        table["eta_plus_gamma_theory"] = prediction.eta_plus_gamma

        report = margins(est, inst.a, n_nodes, inst.p).to_dict()
        low, high = band_limits(prediction.eta)
        disconnected = table.loc[table["class"] == "disconnected", "scaled_estimate"]
        report["fraction_disconnected_in_band"] = (
            float(disconnected.between(low, high).mean()) if len(disconnected) else None)
        return MarginStudy(table=table, eta=prediction.eta,
                           eta_plus_gamma=prediction.eta_plus_gamma, report=report)


# ============================================
# PRESETS
# ============================================

DESK_SWEEP = (50, 100, 200)
# sample Granger resolves the class gap at N = 200 from about 3e5 samples
DESK_SCHEDULE = {"n_ref": 600_000, "n_nodes_ref": 200}


def _desk_estimators(granger_sample: str = "granger") -> List[EstimatorSpec]:
    """The three estimators on exact correlations, then on sample correlations."""
    exact = [EstimatorSpec(k, "exact") for k in ("granger", "one_lag", "residual")]
    sample = [EstimatorSpec(k, "sample") for k in (granger_sample, "one_lag", "residual")]
    return exact + sample


def _desk_config(name: str, regime: ConnectionRegime, policy: CombinationPolicy, xi: float,
                 estimators: List[EstimatorSpec], master_seed: int, mc_runs: int) -> ExperimentConfig:
    return ExperimentConfig(
        regime=regime, policy=policy, xi=xi, n_sweep=list(DESK_SWEEP), estimators=estimators,
        schedule=SampleSchedule(regime=regime, xi=xi, **DESK_SCHEDULE),
        mc_runs=mc_runs, master_seed=master_seed, name=name,
    )


def dense_metropolis(master_seed: int = 0, mc_runs: int = 100) -> ExperimentConfig:
    """Metropolis rho = kappa = 0.99, p = 0.1, xi = 0.6."""
    return _desk_config("dense_metropolis", ConnectionRegime.dense(0.1),
                        CombinationPolicy.metropolis(0.99), 0.6, _desk_estimators(),
                        master_seed, mc_runs)


def dense_laplacian(master_seed: int = 0, mc_runs: int = 100) -> ExperimentConfig:
    """Laplacian rho = 0.99, lambda = 0.9, p = 0.1, xi = 0.2."""
    return _desk_config("dense_laplacian", ConnectionRegime.dense(0.1),
                        CombinationPolicy.laplacian(0.99, 0.9), 0.2, _desk_estimators(),
                        master_seed, mc_runs)


def sparse_laplacian(master_seed: int = 0, mc_runs: int = 100) -> ExperimentConfig:
    """Laplacian rho = 0.99, lambda = 0.9, p_N = 0.25 log N / sqrt(N), xi = 0.2."""
    return _desk_config("sparse_laplacian", ConnectionRegime.uniform_sparse(0.25, 0.5),
                        CombinationPolicy.laplacian(0.99, 0.9), 0.2,
                        _desk_estimators("regularized_granger"), master_seed, mc_runs)


PRESETS = {
    "dense_metropolis": dense_metropolis,
    "dense_laplacian": dense_laplacian,
    "sparse_laplacian": sparse_laplacian,
}


# Convenience functions for one-shot runs
def run_experiment(cfg: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """Run a full sweep with a fresh engine."""
    return ExperimentEngine(cfg, threads).run()


def run_margin_study(cfg: ExperimentConfig, n_nodes: int, spec: EstimatorSpec,
                     run: int = 0) -> MarginStudy:
    return ExperimentEngine(cfg).run_margin_study(n_nodes, spec, run)
