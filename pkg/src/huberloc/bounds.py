"""Optimality-gap certificates and a 1D brute-force minimization oracle.

After the convex surrogate is solved, the gap between the nonconvex cost and
the surrogate optimum is bounded by the sum of the loss over the terms whose
discrepancy is negative at the surrogate minimizer. That a posteriori bound
is compared against the a priori one obtained by applying the loss to the raw
measurements. The grid oracle reproduces the single-sensor 1D study at desk
scale, where both the surrogate and the nonconvex cost can be minimized
exhaustively.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .costs import LossFamily, convex_cost_f, nonconvex_cost_g
from .netmodel import DEFAULT_HUBER_RADIUS, NetworkScenario

__all__ = [
    "GapCertificate",
    "GridMinimum",
    "apriori_gap_bound",
    "grid_minimize_1d",
    "one_dim_three_anchor_scenario",
    "tight_gap_bound",
    "write_certificates_csv",
]


@dataclass(frozen=True)
class GapCertificate:
    """A posteriori and a priori optimality-gap bounds for one loss family.

    ``tight_bound`` equals ``g_at_xstar - f_star`` by construction; the
    violating sets collect the edges and anchor links whose discrepancy is
    negative at the surrogate minimizer.
    """

    loss_kind: str
    f_star: float
    g_at_xstar: float
    tight_bound: float
    apriori_bound: float
    violating_edges: tuple
    violating_links: tuple


def tight_gap_bound(x_star, scenario, loss):
    """Certificate for the surrogate minimizer ``x_star``.

    Sums half the loss over the edges and anchor links whose estimated
    distance falls short of the measured range at ``x_star``; those are the
    only terms where the surrogate and the nonconvex cost differ.
    """
    x = np.asarray(x_star, dtype=float).reshape(scenario.n, scenario.dim)
    bound = 0.0
    violating_edges = []
    violating_links = []
    if scenario.num_edges:
        diff = x[scenario.edges[:, 0]] - x[scenario.edges[:, 1]]
        delta = np.sqrt(np.einsum("ij,ij->i", diff, diff)) - scenario.edge_dists
        neg = delta < 0
        bound += 0.5 * np.sum(loss.value(delta[neg], scenario.edge_radii[neg]))
        violating_edges = [tuple(map(int, e)) for e in scenario.edges[neg]]
    diff = x[scenario.link_nodes] - scenario.anchors[scenario.link_anchors]
    delta = np.sqrt(np.einsum("ij,ij->i", diff, diff)) - scenario.link_dists
    neg = delta < 0
    bound += 0.5 * np.sum(loss.value(delta[neg], scenario.link_radii[neg]))
    violating_links = [
        (int(i), int(k))
        for i, k in zip(scenario.link_nodes[neg], scenario.link_anchors[neg])
    ]
    return GapCertificate(
        loss_kind=loss.kind,
        f_star=convex_cost_f(x, scenario, loss),
        g_at_xstar=nonconvex_cost_g(x, scenario, loss),
        tight_bound=float(bound),
        apriori_bound=apriori_gap_bound(scenario, loss),
        violating_edges=tuple(violating_edges),
        violating_links=tuple(violating_links),
    )


def apriori_gap_bound(scenario, loss):
    """Gap bound available before solving: half the loss of every range."""
    total = 0.5 * np.sum(loss.value(scenario.edge_dists, scenario.edge_radii))
    total += 0.5 * np.sum(loss.value(scenario.link_dists, scenario.link_radii))
    return float(total)


@dataclass(frozen=True)
class GridMinimum:
    """Result of an exhaustive 1D search over both costs."""

    x_min: float  # grid minimizer of the convex surrogate
    f_min: float
    g_min: float  # grid minimum of the nonconvex cost
    x_g_min: float
    g_at_x_min: float  # nonconvex cost at the surrogate minimizer


def grid_minimize_1d(scenario, loss, resolution=1e-4, interval=None):
    """Exhaustive grid minimization of both costs for a 1D single sensor.

    The default interval spans the anchors padded by twice the largest
    measured range; a custom interval must contain the anchors padded by the
    largest range, so that no minimizer can escape the grid.
    """
    if scenario.dim != 1 or scenario.n != 1:
        raise ValueError("the grid oracle handles a single sensor in 1D")
    anchors = scenario.anchors.ravel()
    max_range = float(scenario.link_dists.max())
    if interval is None:
        lo = anchors.min() - 2.0 * max_range
        hi = anchors.max() + 2.0 * max_range
    else:
        lo, hi = map(float, interval)
        if lo > anchors.min() - max_range or hi < anchors.max() + max_range:
            raise ValueError("interval must contain all anchors padded by the largest range")
    grid = np.arange(lo, hi + resolution, resolution)

    dist = np.abs(grid[:, None] - anchors[scenario.link_anchors][None, :])
    delta = dist - scenario.link_dists[None, :]
    g_vals = 0.5 * loss.value(delta, scenario.link_radii[None, :]).sum(axis=1)
    f_vals = 0.5 * loss.value(
        np.maximum(delta, 0.0), scenario.link_radii[None, :]
    ).sum(axis=1)

    kf = int(np.argmin(f_vals))
    kg = int(np.argmin(g_vals))
    return GridMinimum(
        x_min=float(grid[kf]),
        f_min=float(f_vals[kf]),
        g_min=float(g_vals[kg]),
        x_g_min=float(grid[kg]),
        g_at_x_min=float(g_vals[kf]),
    )


def one_dim_three_anchor_scenario(
    seed,
    sensor=3.0,
    anchors=(0.0, 2.0, 6.0),
    sigma=0.04,
    sigma_outlier=4.0,
    huber_radius=DEFAULT_HUBER_RADIUS,
):
    """One noisy draw of the single-sensor, three-anchor 1D study.

    Every range gets regular Gaussian noise; one range, chosen uniformly at
    random, is additionally corrupted by high-power Gaussian noise.
    Measurements are magnitudes, so they stay positive.
    """
    rng = np.random.default_rng(seed)
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 1)
    true = np.abs(float(sensor) - anchors.ravel())
    noise = sigma * rng.standard_normal(anchors.shape[0])
    outlier_at = int(rng.integers(anchors.shape[0]))
    noise[outlier_at] += sigma_outlier * rng.standard_normal()
    meas = np.abs(true + noise)
    if (meas <= 0).any():  # pragma: no cover - probability zero
        meas = np.maximum(meas, 1e-12)
    k = anchors.shape[0]
    return NetworkScenario(
        dim=1,
        true_positions=np.array([[float(sensor)]]),
        anchors=anchors,
        edges=np.zeros((0, 2), dtype=np.int64),
        edge_dists=np.zeros(0),
        edge_radii=np.zeros(0),
        link_nodes=np.zeros(k, dtype=np.int64),
        link_anchors=np.arange(k, dtype=np.int64),
        link_dists=meas,
        link_radii=np.full(k, float(huber_radius)),
    )


def write_certificates_csv(certificates, path):
    """Export certificates as CSV rows (loss, f_star, g_at_xstar, bounds)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["loss", "f_star", "g_at_xstar", "tight_bound", "apriori_bound"])
        for cert in certificates:
            writer.writerow(
                [
                    cert.loss_kind,
                    cert.f_star,
                    cert.g_at_xstar,
                    cert.tight_bound,
                    cert.apriori_bound,
                ]
            )


def gap_study_families(huber_radius=DEFAULT_HUBER_RADIUS):
    """The three loss families of the gap study, with the stock radius."""
    return (
        LossFamily.huber(huber_radius),
        LossFamily.absolute(),
        LossFamily.quadratic(),
    )
