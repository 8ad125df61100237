import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eeg_ricci.errors import DataError, ShapeError
from eeg_ricci.manifold_graph import (
    FREQ, TIME, NodeVector, WeightedSubgraph, build_subgraph, complete_graph, floyd_warshall,
    node_distance, shortest_path_distances,
)
from eeg_ricci.signal_io import synth_dataset
from eeg_ricci.spectral import ReducedSample, reduce_epoch

from oracles import bellman_ford_all_pairs


def _nv(domain, values, ch="FP1"):
    return NodeVector(ch, domain, np.asarray(values, dtype=float))


class TestNodeDistance:
    def test_time_identity(self):
        v = np.random.default_rng(0).standard_normal(16)
        assert node_distance(_nv(TIME, v), _nv(TIME, v)) == 0.0

    def test_time_euclid(self):
        assert node_distance(_nv(TIME, [0, 0]), _nv(TIME, [3, 4])) == pytest.approx(5.0)

    def test_freq_bounds(self):
        f = np.arange(8.0)
        assert node_distance(_nv(FREQ, f), _nv(FREQ, f)) == 0.0
        assert node_distance(_nv(FREQ, f), _nv(FREQ, -f)) == pytest.approx(1.0)

    def test_mixed_symmetric_and_formula(self):
        rng = np.random.default_rng(1)
        t, f = rng.standard_normal(16), rng.uniform(0, 1, 16)
        d1 = node_distance(_nv(TIME, t), _nv(FREQ, f))
        d2 = node_distance(_nv(FREQ, f), _nv(TIME, t))
        assert d1 == d2
        spec = np.abs(np.fft.fft(np.concatenate([t, np.zeros(16)]))[:16]) ** 2
        rho = np.corrcoef(spec, f)[0, 1]
        expect = 0.5 * (np.linalg.norm(t - f) / 4 + (1 - rho) / 2)
        assert d1 == pytest.approx(expect, abs=1e-12)
        raw = node_distance(_nv(TIME, t), _nv(FREQ, f), normalize_mixed=False)
        assert raw == pytest.approx(0.5 * (np.linalg.norm(t - f) + (1 - rho) / 2), abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            node_distance(_nv(TIME, [1, 2]), _nv(TIME, [1, 2, 3]))


def _sample(rows):
    return ReducedSample(0, 0, np.asarray(rows, float), ("FP1", "FP2", "TP9", "TP10"))


class TestBuildSubgraph:
    def test_all_equal(self):
        rng = np.random.default_rng(2)
        t, f = rng.standard_normal(32), rng.uniform(0, 1, 32)
        g = build_subgraph(_sample([t] * 4 + [f] * 4))
        w = g.weights
        assert np.all(w[:4, :4] == 0) and np.all(w[4:, 4:] == 0)
        assert np.all(w[:4, 4:] == w[0, 4])
        assert g.node_names == ["FP1_t", "FP2_t", "TP9_t", "TP10_t", "FP1_f", "FP2_f", "TP9_f", "TP10_f"]

    def test_bookkeeping(self):
        samples = [reduce_epoch(e) for e in synth_dataset(5, seed=0, n=64)]
        graphs = [build_subgraph(s) for s in samples]
        assert sum(g.weights.size for g in graphs) == 5 * 64

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31))
    def test_weight_matrix_property(self, seed):
        rng = np.random.default_rng(seed)
        g = build_subgraph(_sample(np.vstack([rng.standard_normal((4, 16)), rng.uniform(0, 2, (4, 16))])))
        w = g.weights
        np.testing.assert_array_equal(w, w.T)
        assert np.all(np.diag(w) == 0) and np.all(w >= 0)
        assert g.present.sum() == 56

    def test_wrong_rows(self):
        with pytest.raises(DataError):
            build_subgraph(ReducedSample(0, 0, np.ones((3, 4)), ("a", "b")))

    def test_json_round_trip(self):
        rng = np.random.default_rng(3)
        g = build_subgraph(_sample(np.vstack([rng.standard_normal((4, 16)), rng.uniform(0, 2, (4, 16))])))
        back = WeightedSubgraph.from_json(g.to_json())
        assert back.node_names == g.node_names
        np.testing.assert_array_equal(back.weights, g.weights)
        np.testing.assert_array_equal(back.present, g.present)


class TestShortestPaths:
    def test_single_edge(self):
        w = np.zeros((3, 3))
        p = np.zeros((3, 3), bool)
        w[0, 1] = w[1, 0] = 3
        p[0, 1] = p[1, 0] = True
        d = floyd_warshall(w, p)
        assert d[0, 1] == 3 and np.isinf(d[0, 2]) and np.isinf(d[1, 2]) and d[2, 2] == 0

    def test_path(self):
        w = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], float)
        assert floyd_warshall(w, w > 0)[0, 2] == 2

    def test_metric_complete_graph_is_fixed_point(self):
        pts = np.random.default_rng(4).standard_normal((8, 3))
        w = np.linalg.norm(pts[:, None] - pts[None], axis=2)
        g = complete_graph([_nv(TIME, [0.0])] * 8, w)
        np.testing.assert_allclose(shortest_path_distances(g), w, atol=1e-12)

    def test_negative_rejected(self):
        g = complete_graph([_nv(TIME, [0.0])] * 2, np.array([[0, -1], [-1, 0]], float))
        with pytest.raises(DataError):
            shortest_path_distances(g)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.integers(2, 7))
    def test_against_bellman_ford(self, seed, n):
        rng = np.random.default_rng(seed)
        w = rng.uniform(0, 5, (n, n)) * (rng.random((n, n)) < 0.3)  # zero-weight edges included
        p = np.triu(rng.random((n, n)) < 0.5, 1)
        p = p | p.T
        w = np.triu(w, 1)
        w = w + w.T
        np.testing.assert_allclose(floyd_warshall(w, p), bellman_ford_all_pairs(w.tolist(), p.tolist()))
