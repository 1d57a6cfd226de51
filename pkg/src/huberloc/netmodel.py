"""Network scenarios: geometry, measurement graph, noise, and graph constants.

A scenario bundles ground-truth sensor positions, anchor positions, the
measurement graph (sensor-sensor edges and sensor-anchor links), noisy range
measurements, and per-measurement robustness radii. Scenarios are immutable
values; applying noise returns a new scenario. All lengths share one unit
(the stock experiments use a 1 km square, so 0.04 means 40 m).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

__all__ = [
    "DEFAULT_COMM_RADIUS",
    "DEFAULT_HUBER_RADIUS",
    "IncidenceStructure",
    "NetworkScenario",
    "NoiseModel",
    "ScenarioGenerationError",
    "apply_noise",
    "build_incidence",
    "corner_anchors",
    "generate_geometric_network",
    "lipschitz_constant",
    "load_scenario",
    "save_scenario",
    "true_distances",
]

# Fallback robustness radius when no noise level is known (length units).
DEFAULT_HUBER_RADIUS = 0.1

# Tuned so that 10 sensors in the unit square with 4 corner anchors average
# node degree about 4.3 (see tests/test_netmodel.py for the statistical check).
DEFAULT_COMM_RADIUS = 0.50

MAX_GENERATION_ATTEMPTS = 1000


class ScenarioGenerationError(RuntimeError):
    """Rejection sampling could not produce a valid scenario."""


@dataclass(frozen=True)
class NoiseModel:
    """Measurement noise specification.

    ``kind`` selects the variant:

    - ``"gaussian"``: every measurement gets zero-mean Gaussian noise with
      standard deviation ``sigma``.
    - ``"outlier"``: measurements involving a node in ``faulty_nodes`` use
      ``sigma_outlier`` instead of ``sigma``.
    - ``"bias"``: measurements involving a faulty node are set to
      ``bias_factor`` times the true distance, exactly; the rest get regular
      Gaussian noise.
    """

    kind: str
    sigma: float = 0.0
    faulty_nodes: tuple = ()
    sigma_outlier: float = 0.0
    bias_factor: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "outlier", "bias"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0 or self.sigma_outlier < 0:
            raise ValueError("noise standard deviations must be nonnegative")
        if self.kind == "bias" and not self.bias_factor > 0:
            raise ValueError("bias_factor must be positive")
        object.__setattr__(
            self, "faulty_nodes", tuple(sorted({int(v) for v in self.faulty_nodes}))
        )

    @classmethod
    def gaussian(cls, sigma):
        return cls("gaussian", sigma=float(sigma))

    @classmethod
    def outlier(cls, sigma, faulty_nodes, sigma_outlier):
        return cls(
            "outlier",
            sigma=float(sigma),
            faulty_nodes=tuple(faulty_nodes),
            sigma_outlier=float(sigma_outlier),
        )

    @classmethod
    def bias(cls, sigma, faulty_nodes, bias_factor):
        return cls(
            "bias",
            sigma=float(sigma),
            faulty_nodes=tuple(faulty_nodes),
            bias_factor=float(bias_factor),
        )


def _is_connected(n, edges):
    """Breadth-first connectivity check on node count ``n`` and an (E, 2) edge array."""
    if n <= 1:
        return True
    adj = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    return bool(seen.all())


@dataclass(frozen=True, eq=False)
class NetworkScenario:
    """Immutable localization scenario.

    Edges are stored as (i, j) pairs with ``i < j``; this ordering fixes the
    sign convention of the incidence structure. Anchor links are stored flat
    in node-major order, which also fixes the layout of stacked variables.

    Invariants enforced at construction: the sensor graph is connected, at
    least one anchor link exists, every measurement and radius is strictly
    positive and finite, edges are unique with no self-loops.
    """

    dim: int
    true_positions: np.ndarray  # (n, dim)
    anchors: np.ndarray  # (m, dim)
    edges: np.ndarray  # (E, 2) int, i < j, sorted lexicographically
    edge_dists: np.ndarray  # (E,) measured ranges d_ij
    edge_radii: np.ndarray  # (E,) robustness radii for edges
    link_nodes: np.ndarray  # (L,) int, sorted node-major
    link_anchors: np.ndarray  # (L,) int
    link_dists: np.ndarray  # (L,) measured ranges r_ik
    link_radii: np.ndarray  # (L,) robustness radii for links

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.true_positions, dtype=float))
        anchors = np.asarray(self.anchors, dtype=float).reshape(-1, pos.shape[1])
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        edge_dists = np.asarray(self.edge_dists, dtype=float).ravel()
        edge_radii = np.asarray(self.edge_radii, dtype=float).ravel()
        link_nodes = np.asarray(self.link_nodes, dtype=np.int64).ravel()
        link_anchors = np.asarray(self.link_anchors, dtype=np.int64).ravel()
        link_dists = np.asarray(self.link_dists, dtype=float).ravel()
        link_radii = np.asarray(self.link_radii, dtype=float).ravel()

        n = pos.shape[0]
        if self.dim < 1 or pos.shape[1] != self.dim:
            raise ValueError("positions do not match the declared dimension")
        if n < 1:
            raise ValueError("at least one sensor is required")
        if edges.shape[0] != edge_dists.size or edges.shape[0] != edge_radii.size:
            raise ValueError("edge arrays have mismatched lengths")
        if not (
            link_nodes.size == link_anchors.size == link_dists.size == link_radii.size
        ):
            raise ValueError("anchor link arrays have mismatched lengths")
        if link_nodes.size == 0:
            raise ValueError("at least one anchor link is required")

        if edges.size:
            if (edges[:, 0] >= edges[:, 1]).any():
                raise ValueError("edges must be ordered pairs (i, j) with i < j")
            if edges.min() < 0 or edges.max() >= n:
                raise ValueError("edge endpoints out of range")
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = edges[order]
            edge_dists = edge_dists[order]
            edge_radii = edge_radii[order]
            if len({(int(i), int(j)) for i, j in edges}) != edges.shape[0]:
                raise ValueError("duplicate edges are not allowed")

        if link_nodes.min() < 0 or link_nodes.max() >= n:
            raise ValueError("link node index out of range")
        if anchors.shape[0] == 0 or link_anchors.min() < 0 or link_anchors.max() >= anchors.shape[0]:
            raise ValueError("link anchor index out of range")
        order = np.lexsort((link_anchors, link_nodes))
        link_nodes = link_nodes[order]
        link_anchors = link_anchors[order]
        link_dists = link_dists[order]
        link_radii = link_radii[order]
        if len({(int(i), int(k)) for i, k in zip(link_nodes, link_anchors)}) != link_nodes.size:
            raise ValueError("duplicate anchor links are not allowed")

        for name, arr in (
            ("edge_dists", edge_dists),
            ("edge_radii", edge_radii),
            ("link_dists", link_dists),
            ("link_radii", link_radii),
        ):
            if arr.size and not (np.isfinite(arr).all() and (arr > 0).all()):
                raise ValueError(f"{name} must be strictly positive finite numbers")
        if not np.isfinite(pos).all() or not np.isfinite(anchors).all():
            raise ValueError("positions and anchors must be finite")

        if not _is_connected(n, edges):
            raise ValueError("the sensor graph must be connected")

        object.__setattr__(self, "true_positions", pos)
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "edge_dists", edge_dists)
        object.__setattr__(self, "edge_radii", edge_radii)
        object.__setattr__(self, "link_nodes", link_nodes)
        object.__setattr__(self, "link_anchors", link_anchors)
        object.__setattr__(self, "link_dists", link_dists)
        object.__setattr__(self, "link_radii", link_radii)

    @property
    def n(self):
        return self.true_positions.shape[0]

    @property
    def num_edges(self):
        return self.edges.shape[0]

    @property
    def num_links(self):
        return self.link_nodes.size

    @cached_property
    def neighbor_lists(self):
        """Per node, sorted array of neighbor node ids."""
        out = [[] for _ in range(self.n)]
        for i, j in self.edges:
            out[i].append(int(j))
            out[j].append(int(i))
        return tuple(np.asarray(sorted(lst), dtype=np.int64) for lst in out)

    @cached_property
    def node_link_ids(self):
        """Per node, indices into the flat link arrays (node-major order)."""
        out = [[] for _ in range(self.n)]
        for idx, i in enumerate(self.link_nodes):
            out[int(i)].append(idx)
        return tuple(np.asarray(lst, dtype=np.int64) for lst in out)

    @property
    def anchor_links(self):
        """Per node, tuple of anchor ids with a measured range to that node."""
        return tuple(
            tuple(int(k) for k in self.link_anchors[ids]) for ids in self.node_link_ids
        )

    def with_radii(self, radius):
        """Return a copy with every robustness radius set to ``radius``."""
        radius = float(radius)
        if not radius > 0:
            raise ValueError("radius must be positive")
        return replace(
            self,
            edge_radii=np.full(self.num_edges, radius),
            link_radii=np.full(self.num_links, radius),
        )

    def to_dict(self, meta=None):
        doc = {
            "dim": int(self.dim),
            "positions": self.true_positions.tolist(),
            "anchors": self.anchors.tolist(),
            "edges": self.edges.tolist(),
            "edge_measurements": self.edge_dists.tolist(),
            "edge_radii": self.edge_radii.tolist(),
            "link_nodes": self.link_nodes.tolist(),
            "link_anchors": self.link_anchors.tolist(),
            "link_measurements": self.link_dists.tolist(),
            "link_radii": self.link_radii.tolist(),
        }
        if meta is not None:
            doc["meta"] = meta
        return doc

    @classmethod
    def from_dict(cls, doc):
        return cls(
            dim=int(doc["dim"]),
            true_positions=np.asarray(doc["positions"], dtype=float),
            anchors=np.asarray(doc["anchors"], dtype=float),
            edges=np.asarray(doc["edges"], dtype=np.int64).reshape(-1, 2),
            edge_dists=np.asarray(doc["edge_measurements"], dtype=float),
            edge_radii=np.asarray(doc["edge_radii"], dtype=float),
            link_nodes=np.asarray(doc["link_nodes"], dtype=np.int64),
            link_anchors=np.asarray(doc["link_anchors"], dtype=np.int64),
            link_dists=np.asarray(doc["link_measurements"], dtype=float),
            link_radii=np.asarray(doc["link_radii"], dtype=float),
        )


def save_scenario(scenario, path, meta=None):
    """Write a scenario to ``path`` as JSON. Round-trips losslessly."""
    with open(path, "w") as fh:
        json.dump(scenario.to_dict(meta=meta), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_scenario(path):
    with open(path) as fh:
        return NetworkScenario.from_dict(json.load(fh))


def true_distances(scenario):
    """True edge and link distances implied by the ground-truth positions."""
    pos = scenario.true_positions
    if scenario.num_edges:
        diff = pos[scenario.edges[:, 0]] - pos[scenario.edges[:, 1]]
        edge_true = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    else:
        edge_true = np.zeros(0)
    diff = pos[scenario.link_nodes] - scenario.anchors[scenario.link_anchors]
    link_true = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return edge_true, link_true


def corner_anchors(dim, area_side=1.0):
    """Anchors at the 2**dim corners of the deployment square/cube."""
    corners = list(itertools.product((0.0, float(area_side)), repeat=dim))
    return np.asarray(corners, dtype=float)


def generate_geometric_network(
    n,
    dim=2,
    area_side=1.0,
    comm_radius=DEFAULT_COMM_RADIUS,
    anchor_layout=None,
    seed=0,
    huber_radius=DEFAULT_HUBER_RADIUS,
    max_attempts=MAX_GENERATION_ATTEMPTS,
):
    """Sample a connected geometric scenario with noiseless measurements.

    Sensors are drawn uniformly in the square (or cube) of side ``area_side``.
    An edge exists between two sensors, and a link between a sensor and an
    anchor, whenever their distance is at most ``comm_radius``. Sampling is
    rejected and retried until the sensor graph is connected and at least one
    anchor link exists.

    Parameters
    ----------
    n : int
        Number of sensors.
    dim : int
        Ambient dimension (1, 2 or 3 in practice).
    anchor_layout : array or None
        Anchor positions, one per row. Defaults to the corners of the area.
    seed : int or numpy seed
        Randomness source; the same seed reproduces the scenario exactly.
    huber_radius : float
        Constant robustness radius stored on every measurement.

    Returns
    -------
    NetworkScenario
        Measurements equal the true distances; apply a noise model next.

    Raises
    ------
    ScenarioGenerationError
        If no valid sample is found within ``max_attempts`` draws.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not comm_radius > 0:
        raise ValueError("comm_radius must be positive")
    anchors = (
        corner_anchors(dim, area_side)
        if anchor_layout is None
        else np.asarray(anchor_layout, dtype=float).reshape(-1, dim)
    )
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        pos = rng.uniform(0.0, area_side, size=(n, dim))
        diff = pos[:, None, :] - pos[None, :, :]
        dists = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        iu, ju = np.triu_indices(n, k=1)
        keep = dists[iu, ju] <= comm_radius
        edges = np.stack([iu[keep], ju[keep]], axis=1)
        adiff = pos[:, None, :] - anchors[None, :, :]
        adists = np.sqrt(np.einsum("ijk,ijk->ij", adiff, adiff))
        li, lk = np.nonzero(adists <= comm_radius)
        if li.size == 0 or not _is_connected(n, edges):
            continue
        edge_true = dists[edges[:, 0], edges[:, 1]] if edges.size else np.zeros(0)
        link_true = adists[li, lk]
        if (edge_true <= 0).any() or (link_true <= 0).any():
            continue  # coincident points, resample
        return NetworkScenario(
            dim=dim,
            true_positions=pos,
            anchors=anchors,
            edges=edges,
            edge_dists=edge_true,
            edge_radii=np.full(edges.shape[0], float(huber_radius)),
            link_nodes=li,
            link_anchors=lk,
            link_dists=link_true,
            link_radii=np.full(li.size, float(huber_radius)),
        )
    raise ScenarioGenerationError(
        f"cannot produce connected scenario after {max_attempts} attempts"
    )


def apply_noise(scenario, model, seed):
    """Return a copy of ``scenario`` with freshly drawn noisy measurements.

    Measurements are ``|true distance + noise|`` with the noise standard
    deviation chosen per the model variant; the bias variant replaces every
    measurement of a faulty node by ``bias_factor * true distance`` exactly.
    Deterministic given ``seed``.
    """
    faulty = set(model.faulty_nodes)
    if faulty and max(faulty) >= scenario.n:
        raise ValueError("faulty_nodes out of range for this scenario")
    rng = np.random.default_rng(seed)
    edge_true, link_true = true_distances(scenario)

    edge_sigma = np.full(scenario.num_edges, model.sigma)
    link_sigma = np.full(scenario.num_links, model.sigma)
    if faulty:
        edge_faulty = np.array(
            [int(i) in faulty or int(j) in faulty for i, j in scenario.edges],
            dtype=bool,
        )
        link_faulty = np.array([int(i) in faulty for i in scenario.link_nodes], dtype=bool)
    else:
        edge_faulty = np.zeros(scenario.num_edges, dtype=bool)
        link_faulty = np.zeros(scenario.num_links, dtype=bool)
    if model.kind == "outlier":
        edge_sigma[edge_faulty] = model.sigma_outlier
        link_sigma[link_faulty] = model.sigma_outlier

    edge_meas = np.abs(edge_true + edge_sigma * rng.standard_normal(scenario.num_edges))
    link_meas = np.abs(link_true + link_sigma * rng.standard_normal(scenario.num_links))
    if model.kind == "bias":
        edge_meas[edge_faulty] = model.bias_factor * edge_true[edge_faulty]
        link_meas[link_faulty] = model.bias_factor * link_true[link_faulty]
    return replace(scenario, edge_dists=edge_meas, link_dists=link_meas)


@dataclass(frozen=True, eq=False)
class IncidenceStructure:
    """Arc-node incidence table plus the graph constants derived from it.

    Each incidence row carries +1 at the lower-indexed endpoint and -1 at the
    higher one.
    """

    incidence: np.ndarray  # (E, n) int8
    neighbors: tuple  # per node, np.ndarray of neighbor ids
    degrees: np.ndarray  # (n,)
    delta_max: int
    max_anchor_count: int


def build_incidence(scenario):
    """Build the incidence structure of a scenario."""
    n = scenario.n
    C = np.zeros((scenario.num_edges, n), dtype=np.int8)
    for e, (i, j) in enumerate(scenario.edges):
        C[e, i] = 1
        C[e, j] = -1
    degrees = np.asarray([len(nb) for nb in scenario.neighbor_lists], dtype=np.int64)
    max_anchor = max(len(ids) for ids in scenario.node_link_ids)
    return IncidenceStructure(
        incidence=C,
        neighbors=scenario.neighbor_lists,
        degrees=degrees,
        delta_max=int(degrees.max()) if degrees.size else 0,
        max_anchor_count=int(max_anchor),
    )


def lipschitz_constant(inc):
    """Gradient Lipschitz constant of the stacked surrogate cost.

    Equals ``2 + 2 * delta_max + max_anchor_count``; independent of the
    network size and valid for any feasible pair of stacked points.
    """
    return float(2 + 2 * inc.delta_max + inc.max_anchor_count)
