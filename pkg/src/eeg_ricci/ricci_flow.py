"""Ollivier-Ricci curvature, discrete Ricci flow, edge cutting and aggregation.

Curvature of an edge ``(u, v)`` compares the neighbour measures of its end
points by exact Wasserstein-1 transport under the shortest-path metric:

    kappa(u, v) = 1 - W1(mu_u, mu_v) / w(u, v)

and the flow rescales every present edge by ``exp(-alpha * kappa)``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DataError,
    DegenerateEdgeError,
    InfeasibleError,
    IsolatedNodeError,
    OrderMismatchError,
)
from .manifold_graph import WeightedSubgraph, floyd_warshall

EDGE_EPS = 1e-12
WEIGHT_MIN, WEIGHT_MAX = 1e-9, 1e9
HIST_BINS = 32
OVER_SUBGRAPHS, OVER_ITERATIONS = "over-subgraphs", "over-iterations"


@dataclass
class NeighborMeasure:
    support: np.ndarray  # node indices
    mass: np.ndarray


def neighbor_measure(g: WeightedSubgraph, u: int, idleness: float = 0.0) -> NeighborMeasure:
    """Keep ``idleness`` at ``u``, spread the rest uniformly over its neighbours."""
    if not 0.0 <= idleness < 1.0:
        raise ValueError("idleness must lie in [0, 1)")
    nbrs = np.flatnonzero(g.present[u])
    if len(nbrs) == 0:
        raise IsolatedNodeError(f"node {u} has no neighbours")
    mass = np.full(len(nbrs), (1.0 - idleness) / len(nbrs))
    if idleness > 0:
        return NeighborMeasure(np.concatenate([[u], nbrs]), np.concatenate([[idleness], mass]))
    return NeighborMeasure(nbrs, mass)


def _dense_mass(measure: NeighborMeasure, n: int) -> np.ndarray:
    out = np.zeros(n)
    np.add.at(out, measure.support, measure.mass)
    return out


def transport_cost(a, b, cost) -> float:
    """Exact minimum-cost transport between mass vectors ``a`` and ``b``.

    Successive shortest augmenting paths on the bipartite residual network,
    with Bellman-Ford labels since reverse arcs carry negative cost.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    m, n = len(a), len(b)
    if cost.shape != (m, n):
        raise DataError(f"cost shape {cost.shape} does not match masses ({m}, {n})")
    if np.any(a < 0) or np.any(b < 0):
        raise InfeasibleError("masses must be non-negative")
    total = a.sum()
    if abs(total - b.sum()) > 1e-12 * max(1.0, total):
        raise InfeasibleError(f"unbalanced masses: {total!r} vs {b.sum()!r}")
    if not np.all(np.isfinite(cost)):
        raise InfeasibleError("ground cost must be finite on the supports")
    if m == 1 or n == 1:
        return float(np.dot(b, cost[0]) if m == 1 else np.dot(a, cost[:, 0]))

    tol = 1e-15 * max(1.0, total)
    # label improvements below this are round-off and must not re-route paths
    margin = 1e-13 * max(1.0, float(np.abs(cost).max()))
    supply, demand = a.copy(), b.copy()
    flow = np.zeros((m, n))
    while supply.sum() > tol * m and demand.sum() > tol * n:
        ds = np.where(supply > tol, 0.0, np.inf)
        dd = np.full(n, np.inf)
        pred_d = np.full(n, -1)
        pred_s = np.full(m, -1)
        for _ in range(m + n + 1):
            cand = ds[:, None] + cost
            best_i = np.argmin(cand, axis=0)
            best = cand[best_i, np.arange(n)]
            upd_d = best < dd - margin
            dd[upd_d] = best[upd_d]
            pred_d[upd_d] = best_i[upd_d]
            back = np.where(flow > tol, dd[None, :] - cost, np.inf)
            best_j = np.argmin(back, axis=1)
            best = back[np.arange(m), best_j]
            upd_s = (best < ds - margin) & (supply <= tol)
            ds[upd_s] = best[upd_s]
            pred_s[upd_s] = best_j[upd_s]
            if not upd_d.any() and not upd_s.any():
                break
        open_d = np.where(demand > tol, dd, np.inf)
        target = int(np.argmin(open_d))
        if not np.isfinite(open_d[target]):
            raise InfeasibleError("no augmenting path left")

        fwd, bwd = [], []
        j = target
        while True:
            i = int(pred_d[j])
            fwd.append((i, j))
            if pred_s[i] < 0:
                origin = i
                break
            j = int(pred_s[i])
            bwd.append((i, j))
            if len(fwd) > m + n:
                raise InfeasibleError("cycle in augmenting path")
        delta = min(supply[origin], demand[target], *(flow[i, j] for i, j in bwd))
        for i, j in fwd:
            flow[i, j] += delta
        for i, j in bwd:
            flow[i, j] -= delta
            if flow[i, j] <= tol:
                flow[i, j] = 0.0
        supply[origin] -= delta
        demand[target] -= delta
        if supply[origin] <= tol:
            supply[origin] = 0.0
        if demand[target] <= tol:
            demand[target] = 0.0
    return float(np.sum(flow * cost))


def wasserstein1(mu: NeighborMeasure, nu: NeighborMeasure, ground) -> float:
    ground = np.asarray(ground, dtype=float)
    for meas in (mu, nu):
        if np.any(meas.mass < 0) or abs(meas.mass.sum() - 1.0) > 1e-12:
            raise InfeasibleError("measures must be non-negative and sum to 1")
    return transport_cost(mu.mass, nu.mass, ground[np.ix_(mu.support, nu.support)])


def _w1_metric(mass_u: np.ndarray, mass_v: np.ndarray, ground: np.ndarray) -> float:
    """W1 under a metric ground cost: mass common to both sides stays put."""
    diff = mass_u - mass_v
    scale = max(np.abs(mass_u).max(), np.abs(mass_v).max())
    pos = diff > 1e-15 * scale
    neg = diff < -1e-15 * scale
    if not pos.any():
        return 0.0
    a, b = diff[pos], -diff[neg]
    b *= a.sum() / b.sum()  # absorb rounding so the subproblem balances
    return transport_cost(a, b, ground[np.ix_(pos, neg)])


def ollivier_ricci(g: WeightedSubgraph, u: int, v: int, idleness: float = 0.0,
                   ground: np.ndarray | None = None) -> float:
    """Curvature of the present edge ``(u, v)`` under the current weights."""
    if not g.present[u, v]:
        raise DataError(f"edge ({u}, {v}) is not present")
    d = float(g.weights[u, v])
    if d <= EDGE_EPS:
        raise DegenerateEdgeError(f"edge ({u}, {v}) has length {d!r}")
    if ground is None:
        ground = floyd_warshall(g.weights, g.present)
    n = g.n_nodes
    mu = _dense_mass(neighbor_measure(g, u, idleness), n)
    nu = _dense_mass(neighbor_measure(g, v, idleness), n)
    return 1.0 - _w1_metric(mu, nu, ground) / d


def curvature_matrix(g: WeightedSubgraph, idleness: float = 0.0) -> tuple[np.ndarray, int]:
    """Curvatures of all present edges on a frozen state.

    Degenerate edges are evaluated at length ``EDGE_EPS``; the second return
    value counts them.
    """
    n = g.n_nodes
    ground = floyd_warshall(g.weights, g.present)
    masses = [_dense_mass(neighbor_measure(g, u, idleness), n) if g.present[u].any() else None
              for u in range(n)]
    kappa = np.zeros((n, n))
    degenerate = 0
    for u, v in g.edges():
        d = float(g.weights[u, v])
        if d <= EDGE_EPS:
            degenerate += 1
            d = EDGE_EPS
        k = 1.0 - _w1_metric(masses[u], masses[v], ground) / d
        kappa[u, v] = kappa[v, u] = k
    return kappa, degenerate


def _update(weights, present, kappa, alpha):
    with np.errstate(over="ignore"):
        factor = np.exp(-alpha * kappa)
    new = np.where(present, weights * factor, weights)
    return np.where(present, np.clip(new, WEIGHT_MIN, WEIGHT_MAX), new)


def flow_step(g: WeightedSubgraph, alpha: float, idleness: float = 0.0) -> WeightedSubgraph:
    """One synchronous Ricci-flow update of every present edge."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    kappa, degenerate = curvature_matrix(g, idleness)
    if degenerate:
        warnings.warn(f"{degenerate} degenerate edge(s) clamped to {EDGE_EPS}", RuntimeWarning, stacklevel=2)
    return g.with_weights(_update(g.weights, g.present, kappa, alpha))


def edge_histogram(weights, present, bins: int = HIST_BINS) -> tuple[np.ndarray, np.ndarray]:
    vals = np.asarray(weights)[np.triu(present, 1)]
    return np.histogram(vals, bins=bins)


@dataclass
class FlowTrajectory:
    states: list[np.ndarray]
    curvatures: list[np.ndarray]
    alpha: float
    present: np.ndarray
    degenerate_count: int = 0

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def histograms(self, bins: int = HIST_BINS) -> list[tuple[np.ndarray, np.ndarray]]:
        return [edge_histogram(w, self.present, bins) for w in self.states]

    def records(self) -> Iterable[dict]:
        """One JSON-ready record per state; record 0 is the initial graph."""
        for t, (w, (counts, edges)) in enumerate(zip(self.states, self.histograms())):
            yield {
                "iteration": t,
                "weights": w.tolist(),
                "curvatures": self.curvatures[t - 1].tolist() if t else None,
                "histogram": {"counts": counts.tolist(), "edges": edges.tolist()},
            }

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")


def evolve(g: WeightedSubgraph, alpha: float = 0.5, iters: int = 10, idleness: float = 0.0) -> FlowTrajectory:
    """Run ``iters`` flow steps and keep every intermediate weight state."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    states = [np.array(g.weights, dtype=float)]
    curvs = []
    degenerate = 0
    cur = g
    for _ in range(iters):
        kappa, deg = curvature_matrix(cur, idleness)
        degenerate += deg
        curvs.append(kappa)
        cur = cur.with_weights(_update(cur.weights, cur.present, kappa, alpha))
        states.append(cur.weights)
    return FlowTrajectory(states, curvs, alpha, g.present.copy(), degenerate)


def cut_count(n_edges: int, rho: float) -> int:
    # guard against 0.6 * 10 landing a hair above 6
    return min(n_edges, max(0, math.ceil(rho * n_edges - 1e-9)))


def cut_edges(g: WeightedSubgraph, rho: float = 0.6) -> WeightedSubgraph:
    """Drop the ``ceil(rho * |E|)`` heaviest edges.

    Among equal weights the edge with the larger ``(min, max)`` index pair is
    removed first.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    edges = g.edges()
    k = cut_count(len(edges), rho)
    order = sorted(edges, key=lambda e: (g.weights[e], e), reverse=True)
    present = g.present.copy()
    for i, j in order[:k]:
        present[i, j] = present[j, i] = False
    return g.with_weights(g.weights, present)


@dataclass
class CompositeAdjacency:
    matrix: np.ndarray
    source_count: int
    mode: str
    node_names: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def save(self, out_dir) -> None:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        np.savetxt(out / "adjacency.csv", self.matrix, delimiter=",", fmt="%.17g")
        meta = {"mode": self.mode, "N": self.source_count, "nodes": self.node_names, **self.meta}
        (out / "adjacency.json").write_text(json.dumps(meta, indent=1))

    @classmethod
    def load(cls, in_dir) -> "CompositeAdjacency":
        from pathlib import Path

        d = Path(in_dir)
        meta = json.loads((d / "adjacency.json").read_text())
        matrix = np.loadtxt(d / "adjacency.csv", delimiter=",", ndmin=2)
        extra = {k: v for k, v in meta.items() if k not in ("mode", "N", "nodes")}
        return cls(matrix, meta["N"], meta["mode"], meta.get("nodes", []), extra)


def aggregate_adjacency(graphs: Sequence[WeightedSubgraph], mode: str = OVER_SUBGRAPHS) -> CompositeAdjacency:
    """Entrywise mean of weight matrices; absent edges count as zero."""
    if not graphs:
        raise DataError("nothing to aggregate")
    if mode not in (OVER_SUBGRAPHS, OVER_ITERATIONS):
        raise ValueError(f"unknown aggregation mode {mode!r}")
    names = graphs[0].node_names
    total = np.zeros_like(graphs[0].weights, dtype=float)
    for g in graphs:
        if g.node_names != names:
            raise OrderMismatchError(f"node order {g.node_names} differs from {names}")
        total += np.where(g.present, g.weights, 0.0)
    return CompositeAdjacency(total / len(graphs), len(graphs), mode, names)


def aggregate_matrices(weights: np.ndarray, present: np.ndarray, mode: str = OVER_SUBGRAPHS,
                       names: Sequence[str] = ()) -> CompositeAdjacency:
    """Vectorised aggregation over stacked ``(k, n, n)`` weights and masks."""
    weights = np.asarray(weights, dtype=float)
    mat = np.where(present, weights, 0.0).mean(axis=0)
    return CompositeAdjacency(mat, len(weights), mode, list(names))


def trajectory_graphs(g: WeightedSubgraph, traj: FlowTrajectory) -> list[WeightedSubgraph]:
    """Per-iteration snapshots, for aggregation over iterations."""
    return [g.with_weights(w, traj.present) for w in traj.states[1:]]
