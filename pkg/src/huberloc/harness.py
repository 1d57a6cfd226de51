"""Monte Carlo experiment runner, error metrics, and result export.

Trials share one scenario topology and resample the measurement noise; the
master seed deterministically spawns one child seed stream per trial (trial
``m`` uses ``SeedSequence(master).spawn(M)[m]``, split again for noise and
activation draws), so trials are independent, parallelizable, and the whole
experiment reruns bit-identically. Positions live in scenario length units;
summaries also report errors scaled by 1000, the meters reading when the
deployment square has 1 km sides.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .async_solver import ActivationSequence, run_async
from .costs import LossFamily, _project_rows, convex_cost_f
from .netmodel import DEFAULT_HUBER_RADIUS, NoiseModel, apply_noise
from .nodeview import default_init
from .results import RunResult
from .sync_solver import run_sync

__all__ = [
    "ExperimentConfig",
    "TrialResult",
    "empirical_cdf",
    "equal_load_compare",
    "error_per_sensor",
    "minimize_surrogate",
    "run_montecarlo",
    "write_cdf_csv",
    "write_summary_json",
    "write_trials_csv",
]

UNIT_TO_METERS = 1000.0  # stock experiments use a 1 km deployment square


@dataclass(frozen=True)
class TrialResult:
    """Per-trial outcome of a Monte Carlo experiment."""

    trial: int
    estimates: np.ndarray
    error: float
    iterations: int
    messages: int
    converged: bool
    algorithm: str


@dataclass(frozen=True)
class ExperimentConfig:
    """Monte Carlo experiment description.

    ``loss`` selects what is minimized: the Huber surrogate runs through the
    distributed solvers picked by ``algorithm``; the quadratic surrogate runs
    through the centralized smooth baseline (used for paired comparisons).
    ``huber_radius`` of None resolves to 2.5 times the regular noise level
    when that is positive, otherwise to the stock default.
    """

    scenario: object
    noise: NoiseModel
    algorithm: str = "sync"
    loss: LossFamily = field(default_factory=LossFamily.huber)
    trials: int = 100
    master_seed: int = 0
    exclude: tuple = ()
    huber_radius: float | None = None
    max_iters: int = 2000
    tol: float = 1e-9
    inner_tol: float = 1e-10
    max_inner: int = 200
    jobs: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("at least one trial is required")
        if self.algorithm not in ("sync", "async"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.loss.kind == "absolute":
            raise ValueError(
                "no general absolute-value surrogate solver is available; "
                "use the 1D grid oracle for that family"
            )
        object.__setattr__(self, "exclude", tuple(sorted({int(v) for v in self.exclude})))

    def resolved_radius(self):
        if self.huber_radius is not None:
            return float(self.huber_radius)
        if self.noise.sigma > 0:
            return 2.5 * self.noise.sigma
        return DEFAULT_HUBER_RADIUS

    def echo(self):
        """Full effective configuration, for embedding into result files."""
        return {
            "algorithm": self.algorithm,
            "loss": self.loss.kind,
            "huber_radius": self.resolved_radius(),
            "trials": self.trials,
            "master_seed": self.master_seed,
            "exclude": list(self.exclude),
            "noise": {
                "kind": self.noise.kind,
                "sigma": self.noise.sigma,
                "faulty_nodes": list(self.noise.faulty_nodes),
                "sigma_outlier": self.noise.sigma_outlier,
                "bias_factor": self.noise.bias_factor,
            },
            "max_iters": self.max_iters,
            "tol": self.tol,
            "inner_tol": self.inner_tol,
            "max_inner": self.max_inner,
            "scenario": {
                "sensors": self.scenario.n,
                "dim": self.scenario.dim,
                "edges": self.scenario.num_edges,
                "links": self.scenario.num_links,
            },
        }


def error_per_sensor(estimates, truth, excluded=()):
    """Stacked estimate-error norm divided by the retained node count.

    Excluded nodes are dropped from the norm and from the divisor (the
    divisor is the full node count when nothing is excluded).
    """
    estimates = np.asarray(estimates, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimates.shape != truth.shape:
        raise ValueError("estimate and truth shapes differ")
    n = truth.shape[0]
    keep = sorted(set(range(n)) - {int(v) for v in excluded})
    if not keep:
        raise ValueError("cannot exclude every node from the error metric")
    diff = estimates[keep] - truth[keep]
    return float(np.linalg.norm(diff) / len(keep))


def empirical_cdf(values):
    """Right-continuous empirical CDF as sorted (value, fraction) pairs."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("empirical_cdf needs at least one value")
    v = np.sort(values)
    uniq = np.unique(v)
    fracs = np.searchsorted(v, uniq, side="right") / v.size
    return [(float(a), float(b)) for a, b in zip(uniq, fracs)]


def minimize_surrogate(scenario, loss, init=None, max_iters=5000, tol=1e-10):
    """Centralized accelerated minimization of a smooth convex surrogate.

    Supports the quadratic family and the Huber family (whose surrogate is
    also differentiable in the positions alone); the gradient of each term is
    the residual beyond the measurement ball, capped at the robustness radius
    for the Huber family. Used as an experiment baseline and as an
    independent check of the distributed solvers. Not a distributed method.
    """
    if loss.kind not in ("quadratic", "huber"):
        raise ValueError("only the quadratic and huber surrogates are smooth")
    x1 = default_init(scenario) if init is None else np.asarray(init, float).copy()
    x1 = x1.reshape(scenario.n, scenario.dim)
    x2 = x1.copy()
    from .netmodel import build_incidence, lipschitz_constant

    lipschitz = lipschitz_constant(build_incidence(scenario))
    step = 1.0 / lipschitz
    ei = scenario.edges[:, 0] if scenario.num_edges else np.zeros(0, dtype=int)
    ej = scenario.edges[:, 1] if scenario.num_edges else np.zeros(0, dtype=int)
    apos = scenario.anchors[scenario.link_anchors]

    def term_grad(res, dists, radii):
        beyond = res - _project_rows(res, dists)
        if loss.kind == "huber":
            caps = radii if loss.radius is None else np.full(res.shape[0], loss.radius)
            beyond = _project_rows(beyond, caps)
        return beyond

    def grad(x):
        g = np.zeros_like(x)
        if scenario.num_edges:
            pe = term_grad(x[ei] - x[ej], scenario.edge_dists, scenario.edge_radii)
            np.add.at(g, ei, pe)
            np.subtract.at(g, ej, pe)
        pl = term_grad(
            x[scenario.link_nodes] - apos, scenario.link_dists, scenario.link_radii
        )
        np.add.at(g, scenario.link_nodes, pl)
        return g

    best_val = convex_cost_f(x1, scenario, loss)
    best_x = x1.copy()
    converged = False
    it = 0
    while it < max_iters:
        it += 1
        coef = (it - 2.0) / (it + 1.0)
        ex = x1 + coef * (x1 - x2)
        g = grad(ex)
        x2, x1 = x1, ex - step * g
        val = convex_cost_f(x1, scenario, loss)
        if val < best_val:
            best_val, best_x = val, x1.copy()
        if np.linalg.norm(grad(x1)) < tol:
            converged = True
            break
    return RunResult(
        positions=best_x,
        trace=[],
        trace_columns=(),
        converged=converged,
        iterations=it,
        messages=0,
        final_cost=best_val,
        stopped="criterion" if converged else "budget",
    )


def _trial_seeds(master_seed, trials):
    """Deterministic per-trial seed streams: spawn of the master sequence."""
    return np.random.SeedSequence(master_seed).spawn(trials)


def _run_one_trial(config, scenario, trial, trial_seq):
    noise_seq, act_seq = trial_seq.spawn(2)
    noisy = apply_noise(scenario, config.noise, noise_seq)
    init = default_init(noisy)
    if config.loss.kind == "quadratic":
        result = minimize_surrogate(
            noisy, config.loss, init=init, max_iters=config.max_iters, tol=config.tol
        )
    elif config.algorithm == "sync":
        result = run_sync(
            noisy, init, max_iters=config.max_iters, tol=config.tol, trace_every=10
        )
    else:
        result = run_async(
            noisy,
            init,
            activation=ActivationSequence(noisy.n, seed=act_seq),
            max_steps=config.max_iters,
            tol=config.tol,
            inner_tol=config.inner_tol,
            max_inner=config.max_inner,
            trace_every=max(1, noisy.n),
        )
    err = error_per_sensor(result.positions, noisy.true_positions, config.exclude)
    return TrialResult(
        trial=trial,
        estimates=result.positions,
        error=err,
        iterations=result.iterations,
        messages=result.messages,
        converged=bool(result.converged),
        algorithm=config.algorithm if config.loss.kind != "quadratic" else "centralized-quadratic",
    )


def _trial_worker(args):
    config, scenario, trial, seq = args
    return _run_one_trial(config, scenario, trial, seq)


def run_montecarlo(config):
    """Run the configured Monte Carlo experiment.

    Per trial: resample noise with the trial seed, solve, record the error.
    Non-convergence is recorded per trial and never aborts the batch.

    Returns
    -------
    (trials, summary)
        The list of :class:`TrialResult` and a summary dict with the mean and
        standard deviation of the error, its empirical CDF, and the full
        configuration echo.
    """
    scenario = config.scenario.with_radii(config.resolved_radius())
    seqs = _trial_seeds(config.master_seed, config.trials)
    if config.jobs > 1:
        args = [(config, scenario, m, seqs[m]) for m in range(config.trials)]
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_trial_worker, args))
    else:
        results = [
            _run_one_trial(config, scenario, m, seqs[m]) for m in range(config.trials)
        ]
    results.sort(key=lambda r: r.trial)
    errors = np.asarray([r.error for r in results])
    summary = {
        "trials": config.trials,
        "mean_error": float(errors.mean()),
        "std_error": float(errors.std()),
        "mean_error_scaled_m": float(errors.mean() * UNIT_TO_METERS),
        "converged_trials": int(sum(r.converged for r in results)),
        "cdf": empirical_cdf(errors),
        "config": config.echo(),
    }
    return results, summary


def equal_load_compare(
    scenario,
    noise,
    trials=20,
    master_seed=0,
    exclude=(),
    huber_radius=None,
    max_iters=2000,
    tol=1e-9,
    inner_tol=1e-10,
    max_inner=200,
):
    """Paired equal-communication comparison of the two distributed solvers.

    Per trial, the lockstep solver runs first and its cumulative
    scalar-delivery count becomes the gossip solver's message budget (matched
    to within one broadcast), on identical noise. Reports both error samples
    with their CDFs; which solver wins is data, not an assertion.
    """
    radius = (
        float(huber_radius)
        if huber_radius is not None
        else (2.5 * noise.sigma if noise.sigma > 0 else DEFAULT_HUBER_RADIUS)
    )
    base = scenario.with_radii(radius)
    seqs = _trial_seeds(master_seed, trials)
    rows = []
    for m in range(trials):
        noise_seq, act_seq = seqs[m].spawn(2)
        noisy = apply_noise(base, noise, noise_seq)
        init = default_init(noisy)
        sync_res = run_sync(noisy, init, max_iters=max_iters, tol=tol, trace_every=10)
        async_res = run_async(
            noisy,
            init,
            activation=ActivationSequence(noisy.n, seed=act_seq),
            max_steps=10 * max_iters,
            tol=0.0,
            inner_tol=inner_tol,
            max_inner=max_inner,
            message_budget=sync_res.messages,
            trace_every=max(1, noisy.n),
        )
        rows.append(
            {
                "trial": m,
                "budget": sync_res.messages,
                "sync_error": error_per_sensor(sync_res.positions, noisy.true_positions, exclude),
                "async_error": error_per_sensor(async_res.positions, noisy.true_positions, exclude),
                "sync_messages": sync_res.messages,
                "async_messages": async_res.messages,
                "sync_cost": sync_res.final_cost,
                "async_cost": async_res.final_cost,
            }
        )
    sync_errors = [r["sync_error"] for r in rows]
    async_errors = [r["async_error"] for r in rows]
    return {
        "trials": rows,
        "mean_sync_error": float(np.mean(sync_errors)),
        "mean_async_error": float(np.mean(async_errors)),
        "sync_cdf": empirical_cdf(sync_errors),
        "async_cdf": empirical_cdf(async_errors),
        "config": {
            "trials": trials,
            "master_seed": master_seed,
            "exclude": list(exclude),
            "huber_radius": radius,
            "max_iters": max_iters,
            "tol": tol,
            "noise": {
                "kind": noise.kind,
                "sigma": noise.sigma,
                "faulty_nodes": list(noise.faulty_nodes),
                "sigma_outlier": noise.sigma_outlier,
                "bias_factor": noise.bias_factor,
            },
        },
    }


def write_trials_csv(results, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "error", "iters", "messages", "converged"])
        for r in results:
            writer.writerow([r.trial, r.error, r.iterations, r.messages, int(r.converged)])


def write_cdf_csv(cdf_points, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "fraction"])
        for value, fraction in cdf_points:
            writer.writerow([value, fraction])


def write_summary_json(summary, path):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
