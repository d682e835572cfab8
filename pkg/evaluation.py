"""
Evaluation module for graph recovery experiments
Aggregates per-run outcomes into recovery probabilities and margin statistics
"""

import logging
import math
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "N", "estimator", "source", "n_samples", "mc_runs", "successes", "recovery_prob",
    "stderr", "eta_theory", "gamma_theory", "mean_scaled_delta_high",
    "mean_scaled_Delta_low", "wall_ms", "master_seed", "run_first", "run_last", "failures",
]


class RecoveryEvaluator:
    """
    Collects per-run records and turns them into the experiment table.

    A record is a dict with keys N, estimator, source, run, n_samples, recovered,
    failed, scaled_delta_high, scaled_Delta_low and wall_ms. Failed runs count as
    non-recovery and are never dropped.
    """

    def __init__(self, records: Optional[List[Dict]] = None):
        self.records: List[Dict] = list(records) if records else []

    def add_record(self, record: Dict):
        self.records.append(record)

    def add_records(self, records: List[Dict]):
        self.records.extend(records)

    @staticmethod
    def recovery_probability(successes: int, runs: int) -> float:
        """successes / runs."""
        if runs < 1:
            raise ValueError(f"need at least one run, got {runs}")
        return successes / runs

    @staticmethod
    def binomial_stderr(prob: float, runs: int) -> float:
        """Standard error sqrt(p (1 - p) / runs) of a Monte Carlo proportion."""
        if runs < 1:
            raise ValueError(f"need at least one run, got {runs}")
        return math.sqrt(prob * (1.0 - prob) / runs)

    def aggregate(self, master_seed: int, predictions: Optional[Dict] = None,
                  record_timing: bool = False) -> pd.DataFrame:
        """
        Reduce the records to one row per (N, estimator, source).

        Args:
            master_seed: seed stamped on every row for replay
            predictions: {(N, estimator): ConsistencyPrediction-like with eta, gamma}
            record_timing: fill wall_ms (otherwise left empty so the table stays reproducible)

        Returns:
            DataFrame with RESULT_COLUMNS, ordered by N then first appearance
        """
        if not self.records:
            return pd.DataFrame(columns=RESULT_COLUMNS)
        predictions = predictions or {}
        df = pd.DataFrame(self.records)

        rows = []
        for (n_nodes, estimator, source), group in df.groupby(
                ["N", "estimator", "source"], sort=False):
            runs = len(group)
            successes = int(group["recovered"].sum())
            prob = self.recovery_probability(successes, runs)
            ok = group[~group["failed"]]
            prediction = predictions.get((n_nodes, estimator))
            n_samples = group["n_samples"].dropna()
            rows.append({
                "N": int(n_nodes),
                "estimator": estimator,
                "source": source,
                "n_samples": int(n_samples.iloc[0]) if len(n_samples) else None,
                "mc_runs": runs,
                "successes": successes,
                "recovery_prob": prob,
                "stderr": self.binomial_stderr(prob, runs),
                "eta_theory": prediction.eta if prediction is not None else np.nan,
                "gamma_theory": prediction.gamma if prediction is not None else np.nan,
                "mean_scaled_delta_high": ok["scaled_delta_high"].mean() if len(ok) else np.nan,
                "mean_scaled_Delta_low": ok["scaled_Delta_low"].mean() if len(ok) else np.nan,
                "wall_ms": group["wall_ms"].sum() if record_timing else np.nan,
                "master_seed": int(master_seed),
                "run_first": int(group["run"].min()),
                "run_last": int(group["run"].max()),
                "failures": int(group["failed"].sum()),
            })

        table = pd.DataFrame(rows, columns=RESULT_COLUMNS)
        table["n_samples"] = pd.array(table["n_samples"].tolist(), dtype="Int64")
        return table.sort_values("N", kind="stable").reset_index(drop=True)

    @staticmethod
    def compare_with_exact(table: pd.DataFrame) -> pd.DataFrame:
        """
        Sample-correlation recovery against the exact-correlation curve.

        Returns:
            One row per (N, estimator) present with both sources, with the gap
            sample minus exact
        """
        exact = table[table["source"] == "exact"][["N", "estimator", "recovery_prob"]]
        sample = table[table["source"] == "sample"][["N", "estimator", "recovery_prob"]]
        # regularized Granger is compared with the exact Granger curve
        sample = sample.assign(
            reference=sample["estimator"].replace({"regularized_granger": "granger"}))
        merged = sample.merge(exact, left_on=["N", "reference"], right_on=["N", "estimator"],
                              suffixes=("_sample", "_exact"))
        merged = merged.rename(columns={"estimator_sample": "estimator"})
        merged["difference"] = merged["recovery_prob_sample"] - merged["recovery_prob_exact"]
        return merged[["N", "estimator", "recovery_prob_sample", "recovery_prob_exact",
                       "difference"]].reset_index(drop=True)

    @staticmethod
    def is_monotone(probs: List[float], max_inversions: int = 1, tolerance: float = 0.05) -> bool:
        """Non-decreasing up to max_inversions drops of at most tolerance."""
        drops = np.diff(np.asarray(probs, dtype=float))
        inversions = drops[drops < 0]
        return len(inversions) <= max_inversions and bool(np.all(-inversions <= tolerance))

    def generate_evaluation_report(self, table: pd.DataFrame) -> Dict:
        """
        Summary report of an experiment table.

        Returns:
            Per-estimator curves, monotonicity flags and failure totals
        """
        report = {"n_records": len(self.records), "estimators": {}}
        for (estimator, source), group in table.groupby(["estimator", "source"], sort=False):
            group = group.sort_values("N")
            probs = group["recovery_prob"].tolist()
            report["estimators"][f"{estimator}/{source}"] = {
                "N": group["N"].astype(int).tolist(),
                "recovery_prob": probs,
                "monotone": self.is_monotone(probs),
                "final_recovery_prob": probs[-1] if probs else None,
                "failures": int(group["failures"].sum()),
            }
        if (table["source"] == "sample").any() and (table["source"] == "exact").any():
            comparison = self.compare_with_exact(table)
            report["sample_vs_exact"] = comparison.to_dict(orient="records")
        return report
