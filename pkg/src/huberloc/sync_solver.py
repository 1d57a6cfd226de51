"""Lockstep distributed solver with momentum and projected updates.

Every iteration, each node extrapolates its own blocks, broadcasts the
extrapolated position to its neighbors, and applies one projected gradient
step with step size ``1 / L``. The per-node update reads nothing beyond the
node's own memory, the neighbor broadcasts, and its anchors; the simulation
also counts every scalar delivered over the (virtual) radio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import _project_rows, cost_F, gradient_mapping_norm
from .netmodel import build_incidence, lipschitz_constant
from .nodeview import (
    initial_node_blocks,
    initial_positions,
    node_environments,
    stack_node_state,
)
from .results import SYNC_TRACE_COLUMNS, RunResult

__all__ = ["SyncState", "run_sync", "sync_init", "sync_step"]

DEFAULT_MAX_ITERS = 5000
DEFAULT_TOL = 1e-9
STOP_WINDOW = 10


@dataclass(eq=False)
class SyncState:
    """Per-node iterate memory after ``t`` lockstep rounds.

    Each node stores its current and previous position, one auxiliary copy
    per incident edge (both endpoints hold their own, antisymmetric copies),
    and one per anchor link. ``messages`` counts scalars delivered so far.
    """

    x: np.ndarray  # (n, p) current positions
    x_prev: np.ndarray  # (n, p) previous positions
    y: list  # per node, (deg_i, p) current edge copies
    y_prev: list
    w: list  # per node, (na_i, p) current link blocks
    w_prev: list
    t: int
    messages: int

    def stacked(self, scenario, envs=None):
        envs = node_environments(scenario) if envs is None else envs
        return stack_node_state(scenario, envs, self.x, self.y, self.w)


def sync_init(scenario, init, envs=None):
    """Initial state: both history slots equal, auxiliaries projected.

    ``init`` is an (n, p) array of starting positions or a seed (see
    :func:`huberloc.nodeview.initial_positions`).
    """
    envs = node_environments(scenario) if envs is None else envs
    x0 = initial_positions(scenario, init)
    y0, w0 = initial_node_blocks(scenario, envs, x0)
    return SyncState(
        x=x0,
        x_prev=x0.copy(),
        y=[b.copy() for b in y0],
        y_prev=[b.copy() for b in y0],
        w=[b.copy() for b in w0],
        w_prev=[b.copy() for b in w0],
        t=0,
        messages=0,
    )


def _update_node(env, xi_own, xi_nbrs, y1, y2, w1, w2, coef, step):
    """One node's update from its own memory and the received broadcasts.

    ``y1``/``y2`` are the node's last two edge-copy iterates (same for the
    link blocks); ``coef`` is the momentum coefficient of the current round.
    Returns the new position, edge copies, and link blocks.
    """
    ups = y1 + coef * (y1 - y2)
    res_e = (xi_own - xi_nbrs) - ups
    pe = _project_rows(res_e, env.edge_radii)
    y_new = _project_rows(ups + step * pe, env.edge_dists)

    om = w1 + coef * (w1 - w2)
    res_a = (xi_own - env.anchor_pos) - om
    pa = _project_rows(res_a, env.link_radii)
    w_new = _project_rows(om + step * pa, env.link_dists)

    grad_x = pe.sum(axis=0) + pa.sum(axis=0)
    x_new = xi_own - step * grad_x
    return x_new, y_new, w_new


def sync_step(state, scenario, lipschitz, envs=None):
    """Advance all nodes by one lockstep round.

    All nodes form their extrapolated points, exchange them once, and update
    their auxiliaries and positions with step ``1 / lipschitz``. With the
    equal history slots produced by :func:`sync_init`, the first round
    reduces to a plain projected gradient step.
    """
    envs = node_environments(scenario) if envs is None else envs
    t = state.t + 1
    coef = (t - 2.0) / (t + 1.0)
    step = 1.0 / lipschitz

    xi = state.x + coef * (state.x - state.x_prev)  # broadcast payloads
    n, p = state.x.shape
    x_new = np.empty_like(state.x)
    y_new, w_new = [], []
    deliveries = 0
    for env in envs:
        xn, yn, wn = _update_node(
            env,
            xi[env.node],
            xi[env.nbrs],
            state.y[env.node],
            state.y_prev[env.node],
            state.w[env.node],
            state.w_prev[env.node],
            coef,
            step,
        )
        x_new[env.node] = xn
        y_new.append(yn)
        w_new.append(wn)
        deliveries += env.nbrs.size * p
    return SyncState(
        x=x_new,
        x_prev=state.x,
        y=y_new,
        y_prev=state.y,
        w=w_new,
        w_prev=state.w,
        t=t,
        messages=state.messages + deliveries,
    )


def run_sync(
    scenario,
    init,
    max_iters=DEFAULT_MAX_ITERS,
    tol=DEFAULT_TOL,
    lipschitz=None,
    trace_every=1,
    window=STOP_WINDOW,
):
    """Run the lockstep solver until the stopping criterion or ``max_iters``.

    Stops when the relative cost decrease over a ``window``-iteration span
    falls below ``tol``, or when the projected-gradient residual does. The
    trace records ``(iter, cost, residual, messages_cumulative)`` every
    ``trace_every`` iterations (costs are still checked every iteration when
    ``trace_every == 1``; larger strides skip the bookkeeping entirely,
    useful for long reference runs).

    Returns
    -------
    RunResult
        ``converged`` is False when the iteration budget ran out first.
    """
    envs = node_environments(scenario)
    if lipschitz is None:
        lipschitz = lipschitz_constant(build_incidence(scenario))
    state = sync_init(scenario, init, envs=envs)

    z = state.stacked(scenario, envs)
    cost = cost_F(z, scenario)
    resid = gradient_mapping_norm(z, scenario, lipschitz)
    trace = [(0, cost, resid, 0)]
    costs_seen = [cost]
    converged = resid < tol
    stopped = "criterion" if converged else "budget"

    while not converged and state.t < max_iters:
        state = sync_step(state, scenario, lipschitz, envs=envs)
        if state.t % trace_every == 0 or state.t == max_iters:
            z = state.stacked(scenario, envs)
            cost = cost_F(z, scenario)
            resid = gradient_mapping_norm(z, scenario, lipschitz)
            trace.append((state.t, cost, resid, state.messages))
            costs_seen.append(cost)
            if resid < tol:
                converged = True
            elif len(costs_seen) > window:
                recent = costs_seen[-1 - window :]
                span = max(recent) - min(recent)
                if span < tol * max(1.0, abs(recent[0])):
                    converged = True
            if converged:
                stopped = "criterion"
    return RunResult(
        positions=state.x.copy(),
        trace=trace,
        trace_columns=SYNC_TRACE_COLUMNS,
        converged=converged,
        iterations=state.t,
        messages=state.messages,
        final_cost=trace[-1][1],
        stopped=stopped,
        state=state,
    )
