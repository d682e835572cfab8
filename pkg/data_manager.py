"""
Data persistence module for graph-learning experiments
Handles graphs, matrices, sample blocks, experiment configs and result tables

Everything is stored as local JSON or CSV under DATA_DIR. JSON is written with
sorted keys so repeated runs produce byte-identical files.
"""

import json
import os
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from combination import CombinationMatrix
from correlation import CorrelationPair
from diffusion_sim import SampleBlock
from estimators import EstimateMatrix, EstimatorKind
from graph_model import Graph, ObservationSet

DATA_DIR = Path("data")
CSV_FLOAT_FORMAT = "%.10g"
SAMPLE_FLOAT_FORMAT = "%.17g"

PathLike = Union[str, Path]


class ConfigError(ValueError):
    """Malformed or invalid configuration, with optional location details."""

    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        self.field = field
        self.line = line
        self.column = column
        location = []
        if line is not None:
            location.append(f"line {line}, column {column}")
        if field is not None:
            location.append(f"field '{field}'")
        prefix = f"[{'; '.join(location)}] " if location else ""
        super().__init__(prefix + message)


def get_data_dir() -> Path:
    """Output directory from NETTOMO_OUTPUT_DIR, falling back to DATA_DIR."""
    return Path(os.getenv("NETTOMO_OUTPUT_DIR", str(DATA_DIR)))


def init_data_storage(out_dir: Optional[PathLike] = None) -> Path:
    """Create the output directory and return it."""
    path = Path(out_dir) if out_dir is not None else get_data_dir()
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: PathLike, payload: Dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _read_json(path: PathLike) -> Dict:
    with open(path, "r") as f:
        return json.load(f)


# ============================================
# GRAPHS AND MATRICES
# ============================================

def save_graph(path: PathLike, g: Graph, s_indices: Optional[ObservationSet] = None):
    """Store a graph as {n, edges}; a recovered subgraph also records its node ids."""
    payload = {"n": g.n, "edges": [list(e) for e in g.edges()]}
    if s_indices is not None:
        payload["s_indices"] = list(s_indices.indices)
    _write_json(path, payload)


def load_graph(path: PathLike) -> Graph:
    data = _read_json(path)
    return Graph.from_edges(int(data["n"]), [tuple(e) for e in data["edges"]])


def save_matrix(path: PathLike, m: np.ndarray, rho: Optional[float] = None,
                kappa: Optional[float] = None, **extra):
    """Store a matrix as {n, rho, kappa, rows} plus any extra keys."""
    m = np.asarray(m, dtype=float)
    payload = {"n": int(m.shape[0]), "rho": rho, "kappa": kappa, "rows": m.tolist()}
    payload.update(extra)
    _write_json(path, payload)


def load_matrix(path: PathLike) -> Tuple[np.ndarray, Dict]:
    """Matrix rows and the remaining metadata."""
    data = _read_json(path)
    rows = np.asarray(data.pop("rows"), dtype=float).reshape(int(data["n"]), -1)
    return rows, data


def save_combination(path: PathLike, a: CombinationMatrix):
    save_matrix(path, a.a, rho=a.rho, kappa=a.kappa)


def load_combination(path: PathLike) -> CombinationMatrix:
    rows, meta = load_matrix(path)
    return CombinationMatrix(a=rows, rho=float(meta["rho"]), kappa=float(meta["kappa"]))


def save_correlation(path: PathLike, pair: CorrelationPair, rho: Optional[float] = None,
                     kappa: Optional[float] = None):
    """
    Store a correlation pair: rows hold R0, lag_rows hold R1.

    A restricted pair also records its probed node ids and the network size.
    """
    s = pair.s_indices
    save_matrix(path, pair.r0, rho=rho, kappa=kappa, kind=pair.kind,
                lag_rows=np.asarray(pair.r1, dtype=float).tolist(),
                n_samples=None if pair.n_samples is None else int(pair.n_samples),
                s_indices=None if s is None else list(s.indices),
                n_nodes=None if s is None else s.n)


def load_correlation(path: PathLike) -> CorrelationPair:
    rows, meta = load_matrix(path)
    r1 = np.asarray(meta["lag_rows"], dtype=float).reshape(rows.shape)
    s = None
    if meta.get("s_indices") is not None:
        indices = tuple(meta["s_indices"])
        s = ObservationSet(indices=indices, xi_target=len(indices) / meta["n_nodes"],
                           n=int(meta["n_nodes"]))
    return CorrelationPair(r0=rows, r1=r1, kind=meta["kind"], n_samples=meta.get("n_samples"),
                           s_indices=s)


def save_estimate(path: PathLike, est: EstimateMatrix, rho: Optional[float] = None,
                  kappa: Optional[float] = None):
    s_indices = list(est.s_indices.indices) if est.s_indices is not None else None
    save_matrix(path, est.values, rho=rho, kappa=kappa, kind=est.kind.value,
                source=est.source, s_indices=s_indices, n_samples=est.n_samples)


def load_estimate(path: PathLike, n_nodes: Optional[int] = None) -> EstimateMatrix:
    rows, meta = load_matrix(path)
    s = None
    if meta.get("s_indices") is not None and n_nodes is not None:
        s = ObservationSet(indices=tuple(meta["s_indices"]), xi_target=0.0, n=n_nodes)
    return EstimateMatrix(values=rows, kind=EstimatorKind(meta["kind"]), source=meta["source"],
                          s_indices=s, n_samples=meta.get("n_samples"))


# ============================================
# SAMPLE BLOCKS
# ============================================

def _sidecar(csv_path: Path) -> Path:
    return csv_path.with_suffix(".json")


def save_sample_block(csv_path: PathLike, block: SampleBlock):
    """
    Store a sample block as CSV (node label column plus one column per time step)
    and a JSON sidecar {n, sigma, seed, s_indices}.
    """
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    columns = [f"t{i + 1}" for i in range(block.n_samples)]
    df = pd.DataFrame(block.data, columns=columns)
    df.insert(0, "node", [f"node_{i}" for i in block.s_indices.indices])
    df.to_csv(csv_path, index=False, float_format=SAMPLE_FLOAT_FORMAT, lineterminator="\n")
    _write_json(_sidecar(csv_path), {
        "n": block.s_indices.n,
        "sigma": block.sigma,
        "seed": None if block.seed is None else int(block.seed),
        "s_indices": list(block.s_indices.indices),
    })


def load_sample_block(csv_path: PathLike) -> SampleBlock:
    csv_path = Path(csv_path)
    meta = _read_json(_sidecar(csv_path))
    df = pd.read_csv(csv_path, float_precision="round_trip")
    labels = [int(str(label).split("_", 1)[1]) for label in df["node"]]
    if labels != list(meta["s_indices"]):
        raise ValueError(f"node labels in {csv_path} do not match the sidecar indices")
    s = ObservationSet(indices=tuple(labels), xi_target=len(labels) / meta["n"], n=int(meta["n"]))
    data = df.drop(columns="node").to_numpy(dtype=float)
    return SampleBlock(s_indices=s, data=data, sigma=float(meta["sigma"]), seed=meta.get("seed"))


# ============================================
# CONFIGURATION
# ============================================

def load_experiment_config(path: PathLike) -> Dict:
    """
    Read a JSON config file.

    Raises:
        ConfigError: missing file, malformed JSON (with line/column) or a non-object root
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config root in {path} must be a JSON object")
    return data


# ============================================
# EXPERIMENT OUTPUTS
# ============================================

def save_table(path: PathLike, table: pd.DataFrame):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")


def load_table(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path)


def save_experiment(out_dir: PathLike, table: pd.DataFrame, manifest: Dict,
                    name: str = "experiment") -> List[Path]:
    """Write <name>.csv and manifest.json into out_dir; returns both paths."""
    out = init_data_storage(out_dir)
    csv_path = out / f"{name}.csv"
    manifest_path = out / "manifest.json"
    save_table(csv_path, table)
    _write_json(manifest_path, manifest)
    return [csv_path, manifest_path]
