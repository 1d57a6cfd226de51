"""Gossip solver: randomly activated nodes fully minimize their local cost.

Independent random clocks are simulated by a seeded sequence of node draws;
only the activation order matters. The activated node minimizes the global
surrogate cost restricted to its own blocks (its position, the auxiliary of
every incident edge, and its anchor auxiliaries) against the last neighbor
positions it received, then broadcasts its new position. Because each edge
auxiliary is one shared variable seen with opposite signs by its endpoints,
edge and anchor terms enter the restriction with the same weight, and every
activation is a true block minimization: the cost never increases beyond the
inner solver slack, and a block-optimal point is a global minimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import (
    StackedVariables,
    _project_rows,
    _psi_rows,
    cost_F,
    gradient_mapping_norm,
)
from .netmodel import build_incidence, lipschitz_constant
from .nodeview import initial_positions, node_environments
from .results import ASYNC_TRACE_COLUMNS, RunResult

__all__ = [
    "ActivationSequence",
    "AsyncState",
    "async_cost",
    "async_init",
    "async_step",
    "node_subproblem",
    "run_async",
]

DEFAULT_MAX_STEPS = 20000
DEFAULT_TOL = 1e-12
DEFAULT_INNER_TOL = 1e-10
DEFAULT_MAX_INNER = 200


@dataclass(frozen=True)
class ActivationSequence:
    """Seeded i.i.d. node activations with per-node probabilities.

    ``probs`` defaults to the uniform distribution; all entries must be
    strictly positive and sum to one.
    """

    count: int
    seed: object = 0
    probs: object = None

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be at least 1")
        if self.probs is not None:
            probs = np.asarray(self.probs, dtype=float)
            if probs.shape != (self.count,):
                raise ValueError("probs must have one entry per node")
            if not (probs > 0).all():
                raise ValueError("activation probabilities must be positive")
            if not np.isclose(probs.sum(), 1.0, atol=1e-9):
                raise ValueError("activation probabilities must sum to 1")
            object.__setattr__(self, "probs", probs)

    def sequence(self, length):
        """Draw the first ``length`` activations, deterministically."""
        rng = np.random.default_rng(self.seed)
        return rng.choice(self.count, size=int(length), p=self.probs)


@dataclass(eq=False)
class AsyncState:
    """State of the gossip simulation after ``t`` activations.

    Edge and link auxiliaries are stored once, in the stacked layout; an
    activation rewrites the activated node's position, the auxiliaries of its
    incident edges and links, and the cache rows its broadcast refreshes.
    Each node caches the last position received from every neighbor.
    """

    x: np.ndarray  # (n, p)
    y: np.ndarray  # (E, p)
    w: np.ndarray  # (L, p)
    nbr_cache: list  # per node, (deg_i, p)
    t: int
    messages: int

    def stacked(self, scenario=None, envs=None):
        return StackedVariables(self.x.copy(), self.y.copy(), self.w.copy())


def async_init(scenario, init, envs=None):
    """Initial gossip state; caches start from the initial positions."""
    envs = node_environments(scenario) if envs is None else envs
    x0 = initial_positions(scenario, init)
    if scenario.num_edges:
        diff = x0[scenario.edges[:, 0]] - x0[scenario.edges[:, 1]]
        y0 = _project_rows(diff, scenario.edge_dists)
    else:
        y0 = np.zeros((0, scenario.dim))
    adiff = x0[scenario.link_nodes] - scenario.anchors[scenario.link_anchors]
    w0 = _project_rows(adiff, scenario.link_dists)
    cache = [x0[env.nbrs].copy() for env in envs]
    return AsyncState(x=x0, y=y0, w=w0, nbr_cache=cache, t=0, messages=0)


def _local_cost(env, x_i, v, w, nbr_pos):
    """Restriction of the global cost to one node's blocks (fixed neighbors).

    ``v`` holds the incident edge auxiliaries in the node's own frame (sign
    flipped on edges where the node is the higher endpoint).
    """
    total = 0.5 * _psi_rows((x_i - nbr_pos) - v, env.edge_radii).sum()
    total += 0.5 * _psi_rows((x_i - env.anchor_pos) - w, env.link_radii).sum()
    return float(total)


def node_subproblem(
    env,
    x_init,
    v_init,
    w_init,
    nbr_pos,
    lipschitz,
    inner_tol=DEFAULT_INNER_TOL,
    max_inner=DEFAULT_MAX_INNER,
):
    """Approximately minimize one node's restricted cost, neighbors fixed.

    Runs the same accelerated projected-gradient scheme as the lockstep
    solver, restricted to this node's blocks (the restriction accepts the
    same Lipschitz constant as the full cost). The best visited point is
    returned, so the restricted cost never increases relative to the warm
    start. Terminates when the projected-gradient residual drops below
    ``inner_tol``; as a practical safeguard it also stops once the tracked
    best value has not improved for a stretch of iterations.

    Returns
    -------
    (x_i, v, w, info)
        New blocks (``v`` in the node frame) and a dict with ``iters``,
        ``residual`` and ``converged``.
    """
    step = 1.0 / lipschitz
    stall_span = 20

    def mapping(x_i, v, w):
        """One projected-gradient step from a point, and its residual."""
        pe = _project_rows((x_i - nbr_pos) - v, env.edge_radii)
        pa = _project_rows((x_i - env.anchor_pos) - w, env.link_radii)
        gx = pe.sum(axis=0) + pa.sum(axis=0)
        nx = x_i - step * gx
        nv = _project_rows(v + step * pe, env.edge_dists)
        nw = _project_rows(w + step * pa, env.link_dists)
        sq = np.sum((x_i - nx) ** 2) + np.sum((v - nv) ** 2) + np.sum((w - nw) ** 2)
        return nx, nv, nw, lipschitz * float(np.sqrt(sq))

    x1, v1, w1 = x_init.copy(), v_init.copy(), w_init.copy()
    x2, v2, w2 = x1.copy(), v1.copy(), w1.copy()
    best = (_local_cost(env, x1, v1, w1, nbr_pos), x1.copy(), v1.copy(), w1.copy())
    best_iter = 0

    _, _, _, resid = mapping(x1, v1, w1)
    it = 0
    converged = resid < inner_tol
    while not converged and it < max_inner:
        it += 1
        coef = (it - 2.0) / (it + 1.0)
        ex = x1 + coef * (x1 - x2)
        ev = v1 + coef * (v1 - v2)
        ew = w1 + coef * (w1 - w2)
        nx, nv, nw, ex_resid = mapping(ex, ev, ew)
        x2, v2, w2 = x1, v1, w1
        x1, v1, w1 = nx, nv, nw
        val = _local_cost(env, x1, v1, w1, nbr_pos)
        if val < best[0] - 1e-16 * max(1.0, abs(best[0])):
            best = (val, x1.copy(), v1.copy(), w1.copy())
            best_iter = it
        elif val < best[0]:
            best = (val, x1.copy(), v1.copy(), w1.copy())
        # The extrapolated-point residual is free; confirm with the true one
        # only when it looks small or periodically.
        if ex_resid < inner_tol or it % 8 == 0 or it == max_inner:
            _, _, _, resid = mapping(x1, v1, w1)
            converged = resid < inner_tol
        if not converged and it - best_iter >= stall_span:
            _, _, _, resid = mapping(x1, v1, w1)
            break
    _, bx, bv, bw = best
    return bx, bv, bw, {"iters": it, "residual": resid, "converged": converged}


def async_step(
    state,
    scenario,
    chi,
    envs=None,
    lipschitz=None,
    inner_tol=DEFAULT_INNER_TOL,
    max_inner=DEFAULT_MAX_INNER,
):
    """Activate node ``chi``: local block minimization, then broadcast.

    Only blocks owned by the activated node change (its position and the
    auxiliaries of its incident edges and links); its neighbors refresh the
    cache row holding ``chi``'s position, and the message counter grows by
    one position payload per neighbor.
    """
    envs = node_environments(scenario) if envs is None else envs
    if lipschitz is None:
        lipschitz = lipschitz_constant(build_incidence(scenario))
    chi = int(chi)
    env = envs[chi]
    signs = np.where(env.is_lower, 1.0, -1.0)[:, None]
    v_init = signs * state.y[env.edge_ids] if env.nbrs.size else np.zeros((0, scenario.dim))
    wid = np.flatnonzero(scenario.link_nodes == chi)
    xn, vn, wn, _ = node_subproblem(
        env,
        state.x[chi],
        v_init,
        state.w[wid],
        state.nbr_cache[chi],
        lipschitz,
        inner_tol=inner_tol,
        max_inner=max_inner,
    )
    x = state.x.copy()
    x[chi] = xn
    y = state.y.copy()
    if env.nbrs.size:
        y[env.edge_ids] = signs * vn
    w = state.w.copy()
    w[wid] = wn
    cache = list(state.nbr_cache)
    for j in env.nbrs:
        j = int(j)
        slot = int(np.searchsorted(envs[j].nbrs, chi))
        row = cache[j].copy()
        row[slot] = xn
        cache[j] = row
    return AsyncState(
        x=x,
        y=y,
        w=w,
        nbr_cache=cache,
        t=state.t + 1,
        messages=state.messages + env.nbrs.size * scenario.dim,
    )


def async_cost(state, scenario, envs=None):
    """Global surrogate cost of the gossip state."""
    return cost_F(state.stacked(), scenario)


def run_async(
    scenario,
    init,
    activation=None,
    max_steps=DEFAULT_MAX_STEPS,
    tol=DEFAULT_TOL,
    inner_tol=DEFAULT_INNER_TOL,
    max_inner=DEFAULT_MAX_INNER,
    lipschitz=None,
    message_budget=None,
    trace_every=1,
):
    """Run the gossip solver for up to ``max_steps`` activations.

    Stops when the cost improvement over a full ``n``-activation window falls
    below ``tol`` (relative), when ``message_budget`` scalar deliveries are
    reached (used for equal-communication comparisons), or at ``max_steps``.
    The trace rows are ``(iter, cost, residual, messages_cumulative,
    activated_node)``.

    ``activation`` may be an :class:`ActivationSequence`, a seed, or None
    (seed 0, uniform probabilities).
    """
    envs = node_environments(scenario)
    if lipschitz is None:
        lipschitz = lipschitz_constant(build_incidence(scenario))
    if not isinstance(activation, ActivationSequence):
        activation = ActivationSequence(scenario.n, seed=0 if activation is None else activation)
    order = activation.sequence(max_steps)

    state = async_init(scenario, init, envs=envs)
    cost = async_cost(state, scenario, envs)
    resid = gradient_mapping_norm(state.stacked(), scenario, lipschitz)
    trace = [(0, cost, resid, 0, -1)]
    costs_seen = [cost]
    window = scenario.n
    converged = False
    stopped = "budget"

    for k in range(max_steps):
        if message_budget is not None and state.messages >= message_budget:
            stopped = "message_budget"
            break
        state = async_step(
            state,
            scenario,
            order[k],
            envs=envs,
            lipschitz=lipschitz,
            inner_tol=inner_tol,
            max_inner=max_inner,
        )
        cost = async_cost(state, scenario, envs)
        costs_seen.append(cost)
        if state.t % trace_every == 0 or state.t == max_steps:
            resid = gradient_mapping_norm(state.stacked(), scenario, lipschitz)
            trace.append((state.t, cost, resid, state.messages, int(order[k])))
        if message_budget is None and len(costs_seen) > window:
            ref = costs_seen[-1 - window]
            if (ref - cost) < tol * max(1.0, abs(ref)):
                converged = True
                stopped = "criterion"
                break
    return RunResult(
        positions=state.x.copy(),
        trace=trace,
        trace_columns=ASYNC_TRACE_COLUMNS,
        converged=converged,
        iterations=state.t,
        messages=state.messages,
        final_cost=cost,
        stopped=stopped,
        state=state,
    )
