"""
Command-line entry point for graph learning over partially observed diffusion networks

Subcommands:
- simulate: draw a graph, build its combination matrix and emit a sample block
- estimate: turn a sample block into an estimated submatrix and a recovered graph
- predict: closed-form bias and identifiability gap of an estimator
- experiment: Monte Carlo sweep over network sizes
- margins: per-entry margin study at one network size
"""

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional

from dotenv import load_dotenv

# Load environment variables FIRST
load_dotenv()

from clustering import cluster_matrix  # noqa: E402
from combination import CombinationPolicy, apply_policy  # noqa: E402
from correlation import empirical_correlations  # noqa: E402
from data_manager import (  # noqa: E402
    ConfigError, get_data_dir, init_data_storage, load_experiment_config, load_sample_block,
    save_combination, save_correlation, save_estimate, save_experiment, save_graph, save_sample_block,
    save_table,
)
from diffusion_sim import DiffusionConfig, simulate  # noqa: E402
from estimators import EstimatorKind, estimate  # noqa: E402
from experiment_engine import (  # noqa: E402
    PRESETS, EstimatorSpec, ExperimentConfig, ExperimentEngine, run_seeds,
)
from graph_model import Graph, generate_er, sample_observation_set  # noqa: E402
from theory import predict  # noqa: E402

logger = logging.getLogger("app")

SIMULATE_DEFAULTS = {"n": 100, "p": 0.1, "policy": "metropolis", "rho": 0.99, "lam": 1.0,
                     "xi": 0.6, "sigma": 1.0, "samples": 10_000, "seed": 0}


def setup_logging():
    level = os.getenv("NETTOMO_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="[%(levelname)s] %(module)s: %(message)s")


def resolve_threads(flag: Optional[int], config_threads: Optional[int] = None) -> int:
    """--threads, then NETTOMO_THREADS, then the config value, then 1."""
    if flag is not None:
        threads = flag
    elif os.getenv("NETTOMO_THREADS"):
        raw = os.getenv("NETTOMO_THREADS")
        try:
            threads = int(raw)
        except ValueError as exc:
            raise ConfigError(f"NETTOMO_THREADS must be an integer, got {raw!r}",
                              field="NETTOMO_THREADS") from exc
    elif config_threads is not None:
        threads = config_threads
    else:
        threads = 1
    if threads < 1:
        raise ConfigError(f"thread count must be at least 1, got {threads}", field="threads")
    return threads


def _out_dir(args) -> Path:
    return init_data_storage(args.out if args.out else get_data_dir())


def _load_experiment(args) -> ExperimentConfig:
    if args.preset and args.config:
        raise ConfigError("use either --config or --preset, not both")
    if args.preset:
        cfg = PRESETS[args.preset]()
    elif args.config:
        cfg = ExperimentConfig.from_dict(load_experiment_config(args.config))
    else:
        raise ConfigError("experiment needs --config or --preset")
    if args.seed is not None:
        cfg.master_seed = args.seed
    if getattr(args, "mc_runs", None) is not None:
        cfg.mc_runs = args.mc_runs
    return cfg


# ============================================
# SUBCOMMANDS
# ============================================

def cmd_simulate(args) -> int:
    settings: Dict = dict(SIMULATE_DEFAULTS)
    if args.config:
        settings.update(load_experiment_config(args.config))
    for key in SIMULATE_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    unknown = sorted(set(settings) - set(SIMULATE_DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown keys {unknown}", field=unknown[0])

    seed = int(settings["seed"])
    graph_seed, subset_seed, sim_seed = run_seeds(seed, int(settings["n"]), 0)
    g = generate_er(int(settings["n"]), float(settings["p"]), graph_seed)
    if settings["policy"] == "laplacian":
        policy = CombinationPolicy.laplacian(float(settings["rho"]), float(settings["lam"]))
    elif settings["policy"] == "metropolis":
        policy = CombinationPolicy.metropolis(float(settings["rho"]))
    else:
        raise ConfigError(f"policy must be 'laplacian' or 'metropolis', got {settings['policy']!r}",
                          field="policy")
    a = apply_policy(g, policy)
    s = sample_observation_set(g.n, float(settings["xi"]), subset_seed)
    block = simulate(a, DiffusionConfig(sigma=float(settings["sigma"]), n_samples=int(settings["samples"])),
                     s, sim_seed)
    block = replace(block, seed=seed)

    out = _out_dir(args)
    save_graph(out / "graph.json", g)
    save_combination(out / "combination.json", a)
    save_sample_block(out / "block.csv", block)
    print(f"✅ Simulated N={g.n}, |S|={s.size}, n={block.n_samples} -> {out}")
    return 0


def cmd_estimate(args) -> int:
    block = load_sample_block(args.block)
    pair = empirical_correlations(block)
    est = estimate(args.estimator, pair)
    result = cluster_matrix(est)

    out = _out_dir(args)
    save_correlation(out / "correlation.json", pair)
    save_estimate(out / "estimate.json", est)
    save_graph(out / "recovered_graph.json", Graph(est.values.shape[0], result.adjacency),
               s_indices=block.s_indices)
    status = "single cluster, no edges" if result.degenerate else f"{int(result.adjacency.sum()) // 2} edges"
    print(f"✅ {est.kind.value} estimate over |S|={pair.size} ({status}) -> {out}")
    return 0


def cmd_predict(args) -> int:
    kappa = args.kappa if args.kappa is not None else args.rho
    prediction = predict(args.estimator, args.rho, kappa, args.xi, args.p, args.sigma ** 2)
    print(f"estimator={prediction.estimator.value}")
    print(f"eta={prediction.eta:.6g}")
    print(f"gamma={prediction.gamma:.6g}")
    print(f"eta_plus_gamma={prediction.eta_plus_gamma:.6g}")
    return 0


def cmd_experiment(args) -> int:
    cfg = _load_experiment(args)
    threads = resolve_threads(args.threads, cfg.threads)
    out = Path(args.out) if args.out else Path(cfg.output_dir) if cfg.output_dir else get_data_dir()
    result = ExperimentEngine(cfg, threads).run()
    paths = save_experiment(out, result.table, result.manifest, name=cfg.name)
    print(result.table[["N", "estimator", "source", "recovery_prob", "stderr", "failures"]]
          .to_string(index=False))
    print(f"✅ Experiment '{cfg.name}' written to {paths[0]}")
    return 0


def cmd_margins(args) -> int:
    cfg = _load_experiment(args)
    n_nodes = args.n if args.n is not None else cfg.n_sweep[-1]
    spec = EstimatorSpec(args.estimator, args.source)
    study = ExperimentEngine(cfg).run_margin_study(n_nodes, spec, args.run)
    out = _out_dir(args)
    path = out / f"margins_{spec.kind.value}_{spec.source}_N{n_nodes}.csv"
    save_table(path, study.table)
    print(f"eta={study.eta:.6g} eta_plus_gamma={study.eta_plus_gamma:.6g}")
    print(f"✅ Margin study ({len(study.table)} entries) written to {path}")
    return 0


# ============================================
# PARSER
# ============================================

def _common(sub: argparse.ArgumentParser):
    sub.add_argument("--config", help="JSON configuration file")
    sub.add_argument("--seed", type=int, help="master seed")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--threads", type=int, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nettomo", description=__doc__.splitlines()[1])
    subparsers = parser.add_subparsers(dest="command", required=True)
    kinds = [k.value for k in EstimatorKind]

    sim = subparsers.add_parser("simulate", help="emit a sample block")
    _common(sim)
    sim.add_argument("--n", type=int)
    sim.add_argument("--p", type=float)
    sim.add_argument("--policy", choices=["metropolis", "laplacian"])
    sim.add_argument("--rho", type=float)
    sim.add_argument("--lam", type=float)
    sim.add_argument("--xi", type=float)
    sim.add_argument("--sigma", type=float)
    sim.add_argument("--samples", type=int)
    sim.set_defaults(func=cmd_simulate)

    est = subparsers.add_parser("estimate", help="estimate and recover from a sample block")
    _common(est)
    est.add_argument("--block", required=True, help="sample block CSV")
    est.add_argument("--estimator", choices=kinds, default="granger")
    est.set_defaults(func=cmd_estimate)

    pred = subparsers.add_parser("predict", help="closed-form bias and gap")
    _common(pred)
    pred.add_argument("--estimator", choices=kinds, required=True)
    pred.add_argument("--rho", type=float, required=True)
    pred.add_argument("--kappa", type=float)
    pred.add_argument("--xi", type=float, default=0.0)
    pred.add_argument("--p", type=float, required=True)
    pred.add_argument("--sigma", type=float, default=1.0)
    pred.set_defaults(func=cmd_predict)

    exp = subparsers.add_parser("experiment", help="Monte Carlo sweep")
    _common(exp)
    exp.add_argument("--preset", choices=sorted(PRESETS))
    exp.add_argument("--mc-runs", type=int, dest="mc_runs")
    exp.set_defaults(func=cmd_experiment)

    mar = subparsers.add_parser("margins", help="per-entry margin study")
    _common(mar)
    mar.add_argument("--preset", choices=sorted(PRESETS))
    mar.add_argument("--n", type=int)
    mar.add_argument("--estimator", choices=kinds, default="granger")
    mar.add_argument("--source", choices=["exact", "sample"], default="exact")
    mar.add_argument("--run", type=int, default=0)
    mar.set_defaults(func=cmd_margins)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI; returns 0 on success, 2 on usage/config errors, 1 otherwise."""
    setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0

    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"❌ Config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        logger.debug("command failed", exc_info=True)
        print(f"❌ {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
