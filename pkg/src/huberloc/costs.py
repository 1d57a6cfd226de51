"""Loss functions, ball projections, and the stacked surrogate cost.

The robust discrepancy is the Huber function; its composition with a norm can
be written as the squared norm minus the squared distance to a ball, which
makes the stacked surrogate cost differentiable with a projection-based
gradient. Everything here works on one scenario at a time with indexed loops
over edges and links; no dense incidence or selector matrices are formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LossFamily",
    "StackedVariables",
    "ball_projection",
    "convex_cost_f",
    "cost_F",
    "grad_F",
    "gradient_mapping_norm",
    "huber_loss",
    "inner_minimized",
    "nonconvex_cost_g",
    "project_feasible",
    "psi",
    "sq_dist_ball",
    "variational_inner_min",
]


def huber_loss(t, radius):
    """Huber loss: ``t**2`` for ``|t| <= radius``, linear growth outside.

    Accepts scalars or arrays; the radius may be an array broadcastable
    against ``t``.
    """
    t = np.asarray(t, dtype=float)
    radius = np.asarray(radius, dtype=float)
    a = np.abs(t)
    out = np.where(a <= radius, t * t, radius * (2.0 * a - radius))
    return float(out) if out.ndim == 0 else out


def ball_projection(u, radius):
    """Project ``u`` onto the origin-centered ball of the given radius.

    Points inside the ball (including the origin) are returned unchanged, so
    there is no division by zero.
    """
    u = np.array(u, dtype=float)
    norm = np.linalg.norm(u)
    if norm <= radius:
        return u
    return u * (radius / norm)


def _project_rows(res, radii):
    """Row-wise ball projection with per-row radii."""
    res = np.asarray(res, dtype=float)
    if res.size == 0:
        return res.copy()
    norms = np.sqrt(np.einsum("ij,ij->i", res, res))
    outside = norms > radii
    denom = np.where(outside, norms, 1.0)
    scale = np.where(outside, radii / denom, 1.0)
    return res * scale[:, None]


def sq_dist_ball(u, radius):
    """Squared distance of ``u`` to the origin-centered ball of the radius."""
    gap = np.linalg.norm(u) - radius
    return float(max(gap, 0.0) ** 2)


def psi(u, radius):
    """Huber-of-norm via squared norm minus squared distance to the ball.

    Identical to ``huber_loss(norm(u), radius)`` for every vector ``u``.
    """
    u = np.asarray(u, dtype=float)
    return float(u @ u - sq_dist_ball(u, radius))


def _psi_rows(res, radii):
    """Row-wise Huber-of-norm."""
    if res.size == 0:
        return np.zeros(0)
    sq = np.einsum("ij,ij->i", res, res)
    gap = np.maximum(np.sqrt(sq) - radii, 0.0)
    return sq - gap * gap


def variational_inner_min(x_i, x_j, d_ij):
    """Optimal edge auxiliary vector for fixed endpoint positions.

    Returns the minimizer of the Huber-of-norm of ``x_i - x_j - y`` over the
    ball ``norm(y) <= d_ij``; it is the ball projection of ``x_i - x_j`` and
    attains the hinge form of the convex edge term.
    """
    return ball_projection(np.asarray(x_i, dtype=float) - np.asarray(x_j, dtype=float), d_ij)


@dataclass(frozen=True)
class LossFamily:
    """Discrepancy family: quadratic, absolute value, or Huber.

    A Huber family may carry an explicit radius applied to every term; when
    the radius is None the per-measurement radii stored on the scenario are
    used instead.
    """

    kind: str
    radius: float | None = None

    def __post_init__(self):
        if self.kind not in ("quadratic", "absolute", "huber"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "huber" and self.radius is not None and not self.radius > 0:
            raise ValueError("huber radius must be positive")
        if self.kind != "huber" and self.radius is not None:
            raise ValueError("only the huber family takes a radius")

    @classmethod
    def quadratic(cls):
        return cls("quadratic")

    @classmethod
    def absolute(cls):
        return cls("absolute")

    @classmethod
    def huber(cls, radius=None):
        return cls("huber", radius=None if radius is None else float(radius))

    def value(self, t, scenario_radii=None):
        """Evaluate the loss on discrepancies ``t`` (scalar or array)."""
        t = np.asarray(t, dtype=float)
        if self.kind == "quadratic":
            out = t * t
        elif self.kind == "absolute":
            out = np.abs(t)
        else:
            radii = self.radius if self.radius is not None else scenario_radii
            if radii is None:
                raise ValueError("huber family needs a radius or scenario radii")
            out = huber_loss(t, radii)
        return float(out) if np.ndim(out) == 0 else out


def _edge_link_discrepancies(x, scenario):
    x = np.asarray(x, dtype=float).reshape(scenario.n, scenario.dim)
    if scenario.num_edges:
        diff = x[scenario.edges[:, 0]] - x[scenario.edges[:, 1]]
        edge_norm = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        edge_delta = edge_norm - scenario.edge_dists
    else:
        edge_delta = np.zeros(0)
    diff = x[scenario.link_nodes] - scenario.anchors[scenario.link_anchors]
    link_norm = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    link_delta = link_norm - scenario.link_dists
    return edge_delta, link_delta


def nonconvex_cost_g(x, scenario, loss):
    """Robust maximum-likelihood style cost at positions ``x``.

    Sum over edges and anchor links of half the loss of the discrepancy
    between the estimated distance and the measured range.
    """
    edge_delta, link_delta = _edge_link_discrepancies(x, scenario)
    total = 0.5 * np.sum(loss.value(edge_delta, scenario.edge_radii))
    total += 0.5 * np.sum(loss.value(link_delta, scenario.link_radii))
    return float(total)


def convex_cost_f(x, scenario, loss):
    """Convex underestimator of :func:`nonconvex_cost_g`.

    Negative discrepancies are clipped to zero before the loss is applied,
    which keeps every term convex and leaves terms with nonnegative
    discrepancy untouched.
    """
    edge_delta, link_delta = _edge_link_discrepancies(x, scenario)
    total = 0.5 * np.sum(loss.value(np.maximum(edge_delta, 0.0), scenario.edge_radii))
    total += 0.5 * np.sum(loss.value(np.maximum(link_delta, 0.0), scenario.link_radii))
    return float(total)


@dataclass(eq=False)
class StackedVariables:
    """Stacked optimization variables (positions, edge and link auxiliaries).

    Layout order is fixed: all positions by node index, then one auxiliary
    vector per edge in edge order, then one per anchor link in node-major
    order. Feasibility means every auxiliary lies in the ball of its measured
    range.
    """

    x: np.ndarray  # (n, p)
    y: np.ndarray  # (E, p)
    w: np.ndarray  # (L, p)

    def copy(self):
        return StackedVariables(self.x.copy(), self.y.copy(), self.w.copy())

    def flat(self):
        return np.concatenate([self.x.ravel(), self.y.ravel(), self.w.ravel()])

    @classmethod
    def from_flat(cls, scenario, vec):
        p = scenario.dim
        n, e = scenario.n, scenario.num_edges
        vec = np.asarray(vec, dtype=float)
        x = vec[: n * p].reshape(n, p)
        y = vec[n * p : (n + e) * p].reshape(e, p)
        w = vec[(n + e) * p :].reshape(scenario.num_links, p)
        return cls(x.copy(), y.copy(), w.copy())


def inner_minimized(x, scenario):
    """Stack ``x`` with the inner-optimal auxiliaries for every edge and link."""
    x = np.asarray(x, dtype=float).reshape(scenario.n, scenario.dim)
    if scenario.num_edges:
        diff = x[scenario.edges[:, 0]] - x[scenario.edges[:, 1]]
        y = _project_rows(diff, scenario.edge_dists)
    else:
        y = np.zeros((0, scenario.dim))
    adiff = x[scenario.link_nodes] - scenario.anchors[scenario.link_anchors]
    w = _project_rows(adiff, scenario.link_dists)
    return StackedVariables(x.copy(), y, w)


def project_feasible(z, scenario):
    """Project the auxiliary blocks of ``z`` onto their measurement balls."""
    return StackedVariables(
        z.x.copy(),
        _project_rows(z.y, scenario.edge_dists),
        _project_rows(z.w, scenario.link_dists),
    )


def _residuals(z, scenario):
    if scenario.num_edges:
        res_e = z.x[scenario.edges[:, 0]] - z.x[scenario.edges[:, 1]] - z.y
    else:
        res_e = np.zeros((0, scenario.dim))
    res_l = z.x[scenario.link_nodes] - scenario.anchors[scenario.link_anchors] - z.w
    return res_e, res_l


def cost_F(z, scenario):
    """Stacked surrogate cost: half the Huber-of-norm of every residual."""
    res_e, res_l = _residuals(z, scenario)
    return float(
        0.5 * _psi_rows(res_e, scenario.edge_radii).sum()
        + 0.5 * _psi_rows(res_l, scenario.link_radii).sum()
    )


def grad_F(z, scenario):
    """Gradient of :func:`cost_F`, assembled with indexed edge and link loops.

    Per node, the position block accumulates the projected residual of every
    incident edge and link; each auxiliary block gets the negated projected
    residual of its own term.
    """
    res_e, res_l = _residuals(z, scenario)
    pe = _project_rows(res_e, scenario.edge_radii)
    pl = _project_rows(res_l, scenario.link_radii)
    gx = np.zeros_like(z.x)
    if scenario.num_edges:
        np.add.at(gx, scenario.edges[:, 0], pe)
        np.subtract.at(gx, scenario.edges[:, 1], pe)
    np.add.at(gx, scenario.link_nodes, pl)
    return StackedVariables(gx, -pe, -pl)


def gradient_mapping_norm(z, scenario, lipschitz):
    """Norm of the projected-gradient fixed-point residual at ``z``.

    Zero exactly at minimizers of the ball-constrained surrogate problem;
    scaled by the Lipschitz constant so it is comparable to a gradient norm.
    """
    g = grad_F(z, scenario)
    step = 1.0 / lipschitz
    nx = z.x - step * g.x
    ny = _project_rows(z.y - step * g.y, scenario.edge_dists)
    nw = _project_rows(z.w - step * g.w, scenario.link_dists)
    diff = np.concatenate(
        [(z.x - nx).ravel(), (z.y - ny).ravel(), (z.w - nw).ravel()]
    )
    return float(lipschitz * np.linalg.norm(diff))
