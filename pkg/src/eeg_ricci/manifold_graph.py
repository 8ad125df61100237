"""Mixed time/frequency distance and per-sample 8-node subgraphs."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, ShapeError
from .spectral import ReducedSample, one_sided_power_spectrum, pearson

TIME, FREQ = "time", "freq"


@dataclass(frozen=True)
class NodeVector:
    channel: str
    domain: str
    values: np.ndarray

    @property
    def name(self) -> str:
        return f"{self.channel}_{'t' if self.domain == TIME else 'f'}"


def lifted_spectrum(values) -> np.ndarray:
    """Power spectrum of a length-L vector zero-padded to 2L (L bins out)."""
    values = np.asarray(values, dtype=float)
    return one_sided_power_spectrum(np.concatenate([values, np.zeros_like(values)]))


def node_distance(u: NodeVector, v: NodeVector, normalize_mixed: bool = True) -> float:
    """Distance between two node vectors, chosen by their domain pair.

    * time/time: Euclidean distance.
    * freq/freq: ``(1 - pearson) / 2``, bounded in [0, 1].
    * time/freq: mean of the (optionally ``1/sqrt(L)``-scaled) Euclidean
      distance and the spectral correlation distance, where the time vector is
      first mapped to its power spectrum.
    """
    a = np.asarray(u.values, dtype=float)
    b = np.asarray(v.values, dtype=float)
    if a.shape != b.shape:
        raise ShapeError(f"node vectors differ in length: {a.shape} vs {b.shape}")
    if u.domain == TIME and v.domain == TIME:
        return float(np.linalg.norm(a - b))
    if u.domain == FREQ and v.domain == FREQ:
        return (1.0 - pearson(a, b)) / 2.0
    if u.domain == TIME:
        t_vals, f_vals = a, b
    else:
        t_vals, f_vals = b, a
    euclid = float(np.linalg.norm(a - b))
    if normalize_mixed:
        euclid /= np.sqrt(len(a))
    fft_delta = (1.0 - pearson(lifted_spectrum(t_vals), f_vals)) / 2.0
    return 0.5 * (euclid + fft_delta)


@dataclass
class WeightedSubgraph:
    nodes: list[NodeVector]
    weights: np.ndarray  # symmetric distances, zero diagonal
    present: np.ndarray  # symmetric bool, False diagonal

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def node_names(self) -> list[str]:
        return [nv.name for nv in self.nodes]

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.present, 1))
        return list(zip(i.tolist(), j.tolist()))

    def with_weights(self, weights, present=None) -> "WeightedSubgraph":
        return WeightedSubgraph(self.nodes, weights, self.present if present is None else present)

    def to_json(self) -> str:
        return json.dumps({
            "nodes": self.node_names,
            "weights": self.weights.tolist(),
            "present": self.present.astype(int).tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "WeightedSubgraph":
        d = json.loads(text)
        nodes = []
        for name in d["nodes"]:
            ch, tag = name.rsplit("_", 1)
            nodes.append(NodeVector(ch, TIME if tag == "t" else FREQ, np.empty(0)))
        return cls(nodes, np.array(d["weights"], dtype=float), np.array(d["present"], dtype=bool))


def sample_nodes(sample: ReducedSample) -> list[NodeVector]:
    chans = sample.channels
    return [NodeVector(c, TIME, sample.time_rows[k]) for k, c in enumerate(chans)] + [
        NodeVector(c, FREQ, sample.freq_rows[k]) for k, c in enumerate(chans)
    ]


def complete_graph(nodes: Sequence[NodeVector], weights) -> WeightedSubgraph:
    n = len(nodes)
    present = ~np.eye(n, dtype=bool)
    return WeightedSubgraph(list(nodes), np.asarray(weights, dtype=float), present)


def build_subgraph(sample: ReducedSample, normalize_mixed: bool = True) -> WeightedSubgraph:
    """Complete weighted graph over the sample's time and frequency nodes."""
    if sample.features.shape[0] != 2 * len(sample.channels):
        raise DataError("sample must carry one time and one frequency row per channel")
    nodes = sample_nodes(sample)
    n = len(nodes)
    w = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            w[i, j] = w[j, i] = node_distance(nodes[i], nodes[j], normalize_mixed)
    return complete_graph(nodes, w)


def floyd_warshall(weights, present) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    dist = np.where(present, w, np.inf)
    np.fill_diagonal(dist, 0.0)
    for k in range(len(dist)):
        np.minimum(dist, dist[:, k, None] + dist[None, k, :], out=dist)
    return dist


def shortest_path_distances(g: WeightedSubgraph) -> np.ndarray:
    """All-pairs shortest paths over present edges; ``inf`` when unreachable."""
    if np.any(g.weights[g.present] < 0):
        raise DataError("edge weights must be non-negative")
    return floyd_warshall(g.weights, g.present)
