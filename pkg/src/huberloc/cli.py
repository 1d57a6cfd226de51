"""Command-line interface: generate, solve, bounds, montecarlo, compare.

Every run echoes its full effective configuration (flags, defaults, seeds)
into its output files, so any result is self-describing and re-runnable.
Configuration and IO problems exit nonzero; algorithmic non-convergence is
data and still exits zero.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from .async_solver import ActivationSequence, run_async
from .costs import LossFamily
from .harness import (
    ExperimentConfig,
    equal_load_compare,
    run_montecarlo,
    write_cdf_csv,
    write_summary_json,
    write_trials_csv,
)
from .netmodel import (
    DEFAULT_COMM_RADIUS,
    DEFAULT_HUBER_RADIUS,
    NoiseModel,
    ScenarioGenerationError,
    build_incidence,
    corner_anchors,
    generate_geometric_network,
    lipschitz_constant,
    load_scenario,
    save_scenario,
)
from .nodeview import default_init
from .results import write_trace_csv
from .sync_solver import run_sync

__all__ = ["main"]


def _anchors_from_spec(spec, dim, area_side, seed):
    """Parse --anchors: 'corners' or 'random:K'."""
    if spec == "corners":
        return corner_anchors(dim, area_side)
    if spec.startswith("random:"):
        k = int(spec.split(":", 1)[1])
        if k < 1:
            raise ValueError("need at least one anchor")
        rng = np.random.default_rng(seed)
        return rng.uniform(0.0, area_side, size=(k, dim))
    raise ValueError(f"unknown anchor layout {spec!r} (use 'corners' or 'random:K')")


def cmd_generate(args):
    anchors = _anchors_from_spec(args.anchors, args.dim, args.area_side, args.seed + 1)
    scenario = generate_geometric_network(
        n=args.nodes,
        dim=args.dim,
        area_side=args.area_side,
        comm_radius=args.radius,
        anchor_layout=anchors,
        seed=args.seed,
        huber_radius=args.huber_radius,
    )
    meta = {
        "generator": {
            "nodes": args.nodes,
            "dim": args.dim,
            "area_side": args.area_side,
            "comm_radius": args.radius,
            "anchors": args.anchors,
            "seed": args.seed,
            "huber_radius": args.huber_radius,
        }
    }
    save_scenario(scenario, args.out, meta=meta)
    inc = build_incidence(scenario)
    print(
        f"wrote {args.out}: n={scenario.n} anchors={scenario.anchors.shape[0]} "
        f"edges={scenario.num_edges} links={scenario.num_links} "
        f"delta_max={inc.delta_max} L_F={lipschitz_constant(inc):g}"
    )
    return 0


def _load_trace_budget(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"trace {path} is empty")
    return int(float(rows[-1]["messages_cumulative"]))


def cmd_solve(args):
    scenario = load_scenario(args.scenario)
    if args.radius_huber is not None:
        scenario = scenario.with_radii(args.radius_huber)
    init = default_init(scenario) if args.seed is None else int(args.seed)
    config_echo = {
        "scenario": args.scenario,
        "algorithm": args.algorithm,
        "max_iters": args.max_iters,
        "tol": args.tol,
        "seed": args.seed,
        "radius_huber": args.radius_huber,
        "match_load": args.match_load,
    }
    if args.algorithm == "sync":
        result = run_sync(scenario, init, max_iters=args.max_iters, tol=args.tol)
    else:
        budget = _load_trace_budget(args.match_load) if args.match_load else None
        result = run_async(
            scenario,
            init,
            activation=ActivationSequence(scenario.n, seed=args.seed or 0),
            max_steps=args.max_iters,
            tol=args.tol,
            inner_tol=args.inner_tol,
            max_inner=args.max_inner,
            message_budget=budget,
        )
    write_trace_csv(result, args.out_trace)
    doc = {
        "positions": result.positions.tolist(),
        "converged": bool(result.converged),
        "stopped": result.stopped,
        "iterations": result.iterations,
        "messages": result.messages,
        "final_cost": result.final_cost,
        "config": config_echo,
    }
    with open(args.out_estimates, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(
        f"{args.algorithm}: iters={result.iterations} cost={result.final_cost:.6g} "
        f"messages={result.messages} converged={result.converged}"
    )
    return 0


def cmd_bounds(args):
    families = {
        "huber": LossFamily.huber(args.radius_huber),
        "absolute": LossFamily.absolute(),
        "quadratic": LossFamily.quadratic(),
    }
    chosen = list(families) if args.loss == "all" else [args.loss]
    seqs = np.random.SeedSequence(args.seed).spawn(args.trials)
    certs = []
    gaps = {kind: [] for kind in chosen}
    for m in range(args.trials):
        scen = bounds_mod.one_dim_three_anchor_scenario(
            seqs[m],
            sigma=args.sigma,
            sigma_outlier=args.sigma_outlier,
            huber_radius=args.radius_huber,
        )
        for kind in chosen:
            fam = families[kind]
            grid = bounds_mod.grid_minimize_1d(scen, fam, resolution=args.resolution)
            cert = bounds_mod.tight_gap_bound(
                np.array([[grid.x_min]]), scen, fam
            )
            certs.append(cert)
            gaps[kind].append(grid.g_min - grid.f_min)
    bounds_mod.write_certificates_csv(certs, args.out)
    print("loss        mean_gap    mean_tight  mean_apriori")
    for kind in chosen:
        rows = [c for c in certs if c.loss_kind == kind]
        print(
            f"{kind:<11} {np.mean(gaps[kind]):<11.4f} "
            f"{np.mean([c.tight_bound for c in rows]):<11.4f} "
            f"{np.mean([c.apriori_bound for c in rows]):.4f}"
        )
    return 0


def _scenario_from_args(args):
    if args.scenario:
        return load_scenario(args.scenario)
    anchors = _anchors_from_spec(args.anchors, args.dim, args.area_side, args.gen_seed + 1)
    return generate_geometric_network(
        n=args.nodes,
        dim=args.dim,
        area_side=args.area_side,
        comm_radius=args.radius,
        anchor_layout=anchors,
        seed=args.gen_seed,
    )


def _noise_from_args(args):
    faulty = tuple(int(v) for v in args.faulty.split(",")) if args.faulty else ()
    if args.noise == "gaussian":
        return NoiseModel.gaussian(args.sigma)
    if args.noise == "outlier":
        return NoiseModel.outlier(args.sigma, faulty, args.sigma_outlier)
    return NoiseModel.bias(args.sigma, faulty, args.bias_factor)


def cmd_montecarlo(args):
    scenario = _scenario_from_args(args)
    noise = _noise_from_args(args)
    exclude = tuple(int(v) for v in args.exclude.split(",")) if args.exclude else ()
    config = ExperimentConfig(
        scenario=scenario,
        noise=noise,
        algorithm=args.algorithm,
        loss=LossFamily.quadratic() if args.loss == "quadratic" else LossFamily.huber(),
        trials=args.trials,
        master_seed=args.seed,
        exclude=exclude,
        huber_radius=args.radius_huber,
        max_iters=args.max_iters,
        tol=args.tol,
        jobs=args.jobs,
    )
    results, summary = run_montecarlo(config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trials_csv(results, out / "trials.csv")
    write_cdf_csv(summary["cdf"], out / "cdf.csv")
    write_summary_json(summary, out / "summary.json")
    print(
        f"{args.trials} trials: mean error {summary['mean_error']:.6g} "
        f"({summary['mean_error_scaled_m']:.1f} m on a 1 km square), "
        f"{summary['converged_trials']} converged"
    )
    return 0


def cmd_compare(args):
    scenario = _scenario_from_args(args)
    noise = _noise_from_args(args)
    exclude = tuple(int(v) for v in args.exclude.split(",")) if args.exclude else ()
    report = equal_load_compare(
        scenario,
        noise,
        trials=args.trials,
        master_seed=args.seed,
        exclude=exclude,
        huber_radius=args.radius_huber,
        max_iters=args.max_iters,
        tol=args.tol,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_cdf_csv(report["sync_cdf"], out / "sync_cdf.csv")
    write_cdf_csv(report["async_cdf"], out / "async_cdf.csv")
    write_summary_json(
        {k: v for k, v in report.items() if k not in ("sync_cdf", "async_cdf")},
        out / "summary.json",
    )
    print(
        f"equal-load over {args.trials} trials: "
        f"sync mean error {report['mean_sync_error']:.6g}, "
        f"async mean error {report['mean_async_error']:.6g}"
    )
    return 0


def _add_scenario_source(parser):
    parser.add_argument("--scenario", help="scenario file (overrides generator flags)")
    parser.add_argument("--nodes", type=int, default=10)
    parser.add_argument("--dim", type=int, default=2)
    parser.add_argument("--area-side", type=float, default=1.0)
    parser.add_argument("--radius", type=float, default=DEFAULT_COMM_RADIUS)
    parser.add_argument("--anchors", default="corners")
    parser.add_argument("--gen-seed", type=int, default=0)


def _add_noise_flags(parser):
    parser.add_argument("--noise", choices=["gaussian", "outlier", "bias"], default="gaussian")
    parser.add_argument("--sigma", type=float, default=0.04)
    parser.add_argument("--faulty", default="", help="comma-separated faulty node ids")
    parser.add_argument("--sigma-outlier", type=float, default=4.0)
    parser.add_argument("--bias-factor", type=float, default=0.1)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="huberloc",
        description="Robust range-based network localization toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a scenario and write it to a file")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--area-side", type=float, default=1.0)
    p.add_argument("--radius", type=float, default=DEFAULT_COMM_RADIUS)
    p.add_argument("--anchors", default="corners", help="'corners' or 'random:K'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--huber-radius", type=float, default=DEFAULT_HUBER_RADIUS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="run one solver on a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--algorithm", choices=["sync", "async"], required=True)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--seed", type=int, default=None, help="random init/activations")
    p.add_argument("--radius-huber", type=float, default=None)
    p.add_argument("--inner-tol", type=float, default=1e-10)
    p.add_argument("--max-inner", type=int, default=200)
    p.add_argument("--match-load", default=None, help="sync trace CSV fixing the message budget")
    p.add_argument("--out-estimates", required=True)
    p.add_argument("--out-trace", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bounds", help="gap certificates on the 1D study family")
    p.add_argument("--loss", choices=["all", "huber", "absolute", "quadratic"], default="all")
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.04)
    p.add_argument("--sigma-outlier", type=float, default=4.0)
    p.add_argument("--resolution", type=float, default=1e-4)
    p.add_argument("--radius-huber", type=float, default=DEFAULT_HUBER_RADIUS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("montecarlo", help="seeded Monte Carlo experiment")
    _add_scenario_source(p)
    _add_noise_flags(p)
    p.add_argument("--algorithm", choices=["sync", "async"], default="sync")
    p.add_argument("--loss", choices=["huber", "quadratic"], default="huber")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exclude", default="", help="nodes dropped from the error metric")
    p.add_argument("--radius-huber", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("compare", help="equal-communication sync/async comparison")
    _add_scenario_source(p)
    _add_noise_flags(p)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exclude", default="")
    p.add_argument("--radius-huber", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, ScenarioGenerationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
