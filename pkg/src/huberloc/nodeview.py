"""Per-node views of a scenario, shared by the distributed solvers.

The simulated algorithms only let a node touch its own blocks, the
broadcasts of its graph neighbors, and its own anchors. A ``NodeEnv``
packages exactly that slice of the scenario so the per-node update
functions cannot reach anything else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import StackedVariables, _project_rows

__all__ = ["NodeEnv", "default_init", "initial_positions", "node_environments", "stack_node_state"]


@dataclass(frozen=True, eq=False)
class NodeEnv:
    """Everything node ``node`` is allowed to see, in fixed local order."""

    node: int
    nbrs: np.ndarray  # (deg,) neighbor node ids, sorted
    edge_ids: np.ndarray  # (deg,) global edge index of each incident edge
    is_lower: np.ndarray  # (deg,) True where node is the lower endpoint
    edge_dists: np.ndarray  # (deg,)
    edge_radii: np.ndarray  # (deg,)
    anchor_pos: np.ndarray  # (na, p)
    link_dists: np.ndarray  # (na,)
    link_radii: np.ndarray  # (na,)


def node_environments(scenario):
    """Build the per-node environments for a scenario."""
    edge_index = {(int(i), int(j)): e for e, (i, j) in enumerate(scenario.edges)}
    envs = []
    for i in range(scenario.n):
        nbrs = scenario.neighbor_lists[i]
        eids = np.asarray(
            [edge_index[(i, int(j))] if i < j else edge_index[(int(j), i)] for j in nbrs],
            dtype=np.int64,
        )
        ids = scenario.node_link_ids[i]
        envs.append(
            NodeEnv(
                node=i,
                nbrs=nbrs,
                edge_ids=eids,
                is_lower=np.asarray([i < int(j) for j in nbrs], dtype=bool),
                edge_dists=scenario.edge_dists[eids],
                edge_radii=scenario.edge_radii[eids],
                anchor_pos=scenario.anchors[scenario.link_anchors[ids]],
                link_dists=scenario.link_dists[ids],
                link_radii=scenario.link_radii[ids],
            )
        )
    return tuple(envs)


def initial_positions(scenario, init):
    """Resolve an initializer into an (n, p) position array.

    ``init`` may be an array of positions, or a seed for uniform sampling
    inside the anchor bounding box padded by the largest measured range.
    """
    if isinstance(init, np.ndarray) or isinstance(init, (list, tuple)):
        x0 = np.asarray(init, dtype=float).reshape(scenario.n, scenario.dim)
        return x0.copy()
    rng = np.random.default_rng(init)
    pad = float(max(scenario.link_dists.max(initial=0.0), scenario.edge_dists.max(initial=0.0)))
    lo = scenario.anchors.min(axis=0) - pad
    hi = scenario.anchors.max(axis=0) + pad
    return rng.uniform(lo, hi, size=(scenario.n, scenario.dim))


def default_init(scenario):
    """Deterministic default initializer: every node at the anchor centroid."""
    centroid = scenario.anchors.mean(axis=0)
    return np.tile(centroid, (scenario.n, 1))


def initial_node_blocks(scenario, envs, x0):
    """Per-node initial auxiliaries: projected position differences."""
    y0, w0 = [], []
    for env in envs:
        if env.nbrs.size:
            y0.append(_project_rows(x0[env.node] - x0[env.nbrs], env.edge_dists))
        else:
            y0.append(np.zeros((0, scenario.dim)))
        if env.anchor_pos.shape[0]:
            w0.append(_project_rows(x0[env.node] - env.anchor_pos, env.link_dists))
        else:
            w0.append(np.zeros((0, scenario.dim)))
    return y0, w0


def stack_node_state(scenario, envs, x, y_blocks, w_blocks):
    """Canonical stacked variables from per-node state.

    For each edge the copy held by the lower-indexed endpoint is taken, so
    the stacked layout follows the edge sign convention; link blocks are
    already in node-major order.
    """
    y = np.zeros((scenario.num_edges, scenario.dim))
    for env, yb in zip(envs, y_blocks):
        if env.nbrs.size:
            mask = env.is_lower
            y[env.edge_ids[mask]] = yb[mask]
    if scenario.num_links:
        w = np.concatenate([wb for wb in w_blocks if wb.shape[0]], axis=0)
    else:  # pragma: no cover - scenarios always carry at least one link
        w = np.zeros((0, scenario.dim))
    return StackedVariables(x.copy(), y, w)
