import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from eeg_ricci.errors import (
    DataError, DegenerateEdgeError, InfeasibleError, IsolatedNodeError, OrderMismatchError,
)
from eeg_ricci.manifold_graph import floyd_warshall
from eeg_ricci.ricci_flow import (
    OVER_ITERATIONS, OVER_SUBGRAPHS, CompositeAdjacency, NeighborMeasure, aggregate_adjacency,
    aggregate_matrices, curvature_matrix, cut_count, cut_edges, evolve, flow_step, neighbor_measure,
    ollivier_ricci, trajectory_graphs, transport_cost, wasserstein1,
)

from graphs import from_edges, graph, random_graph
from oracles import transport_by_permutation, transport_vertex_enumeration

K3 = [(0, 1), (1, 2), (0, 2)]
P4 = [(0, 1), (1, 2), (2, 3)]
C4 = [(0, 1), (1, 2), (2, 3), (3, 0)]


def _linprog_w1(a, b, cost):
    m, n = cost.shape
    a_eq = np.zeros((m + n, m * n))
    for i in range(m):
        a_eq[i, i * n:(i + 1) * n] = 1
    for j in range(n):
        a_eq[m + j, j::n] = 1
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    return res.fun


class TestNeighborMeasure:
    def test_degree_three(self):
        m = neighbor_measure(from_edges(4, [(0, 1), (0, 2), (0, 3)]), 0)
        assert m.support.tolist() == [1, 2, 3]
        np.testing.assert_allclose(m.mass, [1 / 3] * 3)

    def test_idleness(self):
        m = neighbor_measure(from_edges(2, [(0, 1)]), 0, idleness=0.5)
        assert dict(zip(m.support.tolist(), m.mass.tolist())) == {0: 0.5, 1: 0.5}

    def test_isolated(self):
        with pytest.raises(IsolatedNodeError):
            neighbor_measure(from_edges(3, [(0, 1)]), 2)

    def test_bad_idleness(self):
        with pytest.raises(ValueError):
            neighbor_measure(from_edges(2, [(0, 1)]), 0, idleness=1.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0, 0.99))
    def test_normalised(self, seed, idle):
        g = random_graph(np.random.default_rng(seed))
        for u in range(g.n_nodes):
            assert abs(neighbor_measure(g, u, idle).mass.sum() - 1) < 1e-12


class TestTransport:
    def test_identical(self):
        mu = NeighborMeasure(np.array([0, 1]), np.array([0.5, 0.5]))
        ground = np.array([[0, 2.0], [2.0, 0]])
        assert wasserstein1(mu, mu, ground) == 0.0

    def test_point_masses(self):
        ground = np.array([[0, 2.5], [2.5, 0]])
        assert wasserstein1(NeighborMeasure(np.array([0]), np.array([1.0])),
                            NeighborMeasure(np.array([1]), np.array([1.0])), ground) == 2.5

    def test_vertex_enumeration_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(60):
            a, b = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
            cost = rng.uniform(0, 3, (4, 4))
            assert transport_cost(a, b, cost) == pytest.approx(transport_vertex_enumeration(a, b, cost), abs=1e-9)

    def test_permutation_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(60):
            m, n = rng.integers(1, 7, size=2)
            a_c = rng.multinomial(6, np.ones(m) / m)
            b_c = rng.multinomial(6, np.ones(n) / n)
            cost = rng.uniform(0, 2, (m, n))
            assert transport_cost(a_c / 6, b_c / 6, cost) == pytest.approx(
                transport_by_permutation(a_c, b_c, cost), abs=1e-9)

    @settings(max_examples=80, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 7), st.integers(1, 7))
    def test_against_linprog(self, seed, m, n):
        rng = np.random.default_rng(seed)
        a, b = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n))
        b *= a.sum() / b.sum()
        # repeated integer costs produce many ties
        cost = rng.integers(0, 4, (m, n)).astype(float)
        assert transport_cost(a, b, cost) == pytest.approx(_linprog_w1(a, b, cost), abs=1e-9)

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            transport_cost([0.5, 0.5], [0.7, 0.4], np.ones((2, 2)))
        with pytest.raises(InfeasibleError):
            transport_cost([-0.5, 1.5], [0.5, 0.5], np.ones((2, 2)))
        with pytest.raises(InfeasibleError):
            transport_cost([0.5, 0.5], [0.5, 0.5], np.array([[0, np.inf], [1, 0]]))
        with pytest.raises(InfeasibleError):
            wasserstein1(NeighborMeasure(np.array([0]), np.array([0.9])),
                         NeighborMeasure(np.array([1]), np.array([0.9])), np.ones((2, 2)))


class TestCurvature:
    def test_triangle(self):
        g = from_edges(3, K3)
        for u, v in K3:
            assert ollivier_ricci(g, u, v) == pytest.approx(0.5, abs=1e-9)

    def test_path_interior(self):
        assert ollivier_ricci(from_edges(4, P4), 1, 2) == pytest.approx(0.0, abs=1e-9)

    def test_scale_invariance(self):
        rng = np.random.default_rng(2)
        g = random_graph(rng)
        k1, _ = curvature_matrix(g)
        k2, _ = curvature_matrix(g.with_weights(3.7 * g.weights))
        np.testing.assert_allclose(k1, k2, atol=1e-12)

    def test_absent_and_degenerate(self):
        g = from_edges(3, [(0, 1), (1, 2)])
        with pytest.raises(DataError):
            ollivier_ricci(g, 0, 2)
        w = g.weights.copy()
        w[0, 1] = w[1, 0] = 0.0
        g0 = graph(w, g.present)
        with pytest.raises(DegenerateEdgeError):
            ollivier_ricci(g0, 0, 1)
        _, deg = curvature_matrix(g0)
        assert deg == 1
        with pytest.warns(RuntimeWarning):
            flow_step(g0, 0.5)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from([0.0, 0.5]))
    def test_cancellation_matches_full_transport(self, seed, idle):
        g = random_graph(np.random.default_rng(seed), n=7)
        ground = floyd_warshall(g.weights, g.present)
        kappa, _ = curvature_matrix(g, idle)
        for u, v in g.edges():
            full = wasserstein1(neighbor_measure(g, u, idle), neighbor_measure(g, v, idle), ground)
            assert kappa[u, v] == pytest.approx(1 - full / g.weights[u, v], abs=1e-9)
            assert kappa[u, v] <= 1 + 1e-12
            assert kappa[u, v] == ollivier_ricci(g, u, v, idle)


class TestFlow:
    def test_flat_cycle(self):
        g = from_edges(4, C4)
        np.testing.assert_allclose(curvature_matrix(g)[0], 0, atol=1e-12)
        np.testing.assert_allclose(flow_step(g, 0.5).weights, g.weights, atol=1e-12)

    def test_triangle_one_step(self):
        g = flow_step(from_edges(3, K3), alpha=1.0)
        assert g.weights[0, 1] == pytest.approx(math.exp(-0.5), abs=1e-12)
        assert g.weights[0, 1] == pytest.approx(0.60653, abs=1e-5)

    def test_negative_curvature_grows(self):
        # the bridge of two triangles is negatively curved
        g = from_edges(6, K3 + [(3, 4), (4, 5), (3, 5), (2, 3)])
        kappa, _ = curvature_matrix(g)
        assert kappa[2, 3] < 0
        assert flow_step(g, 0.5).weights[2, 3] > g.weights[2, 3]

    def test_evolve_replay(self):
        g = from_edges(3, K3)
        traj = evolve(g, alpha=1.0, iters=2)
        np.testing.assert_array_equal(traj.states[0], g.weights)
        w = g.weights.copy()
        for _ in range(2):
            k = np.zeros((3, 3))
            cur = graph(w, g.present)
            for u, v in K3:
                k[u, v] = k[v, u] = ollivier_ricci(cur, u, v)
            w = np.where(g.present, w * np.exp(-k), 0.0)
        np.testing.assert_allclose(traj.final, w, rtol=1e-12)
        np.testing.assert_allclose(traj.final[g.present], math.exp(-1.0), rtol=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31))
    def test_recurrence_property(self, seed):
        g = random_graph(np.random.default_rng(seed))
        traj = evolve(g, alpha=0.5, iters=5)
        for t in range(5):
            expect = traj.states[t] * np.exp(-0.5 * traj.curvatures[t])
            np.testing.assert_allclose(traj.states[t + 1][g.present], expect[g.present], rtol=1e-12)
            np.testing.assert_array_equal(traj.states[t + 1][~g.present], g.weights[~g.present])

    def test_validation(self):
        g = from_edges(3, K3)
        with pytest.raises(ValueError):
            evolve(g, iters=0)
        with pytest.raises(ValueError):
            flow_step(g, alpha=0)

    def test_trajectory_records(self, tmp_path):
        g = random_graph(np.random.default_rng(5))
        traj = evolve(g, 0.5, 3)
        traj.write_jsonl(tmp_path / "t.jsonl")
        recs = [json.loads(line) for line in (tmp_path / "t.jsonl").read_text().splitlines()]
        assert [r["iteration"] for r in recs] == [0, 1, 2, 3]
        assert recs[0]["curvatures"] is None
        np.testing.assert_array_equal(recs[3]["weights"], traj.final)
        assert all(sum(r["histogram"]["counts"]) == len(g.edges()) for r in recs)


class TestCut:
    def test_extremes(self):
        g = random_graph(np.random.default_rng(6))
        np.testing.assert_array_equal(cut_edges(g, 0.0).present, g.present)
        assert not cut_edges(g, 1.0).present.any()

    def test_ten_edges(self):
        rng = np.random.default_rng(7)
        edges = [(i, j) for i in range(5) for j in range(i + 1, 5)]
        g = from_edges(5, [(i, j, w) for (i, j), w in zip(edges, rng.permutation(np.arange(1.0, 11.0)))])
        cut = cut_edges(g, 0.6)
        removed = set(g.edges()) - set(cut.edges())
        assert len(removed) == 6
        assert removed == set(sorted(edges, key=lambda e: g.weights[e])[-6:])

    def test_ties_deterministic(self):
        g = from_edges(4, [(i, j) for i in range(4) for j in range(i + 1, 4)])
        assert set(g.edges()) - set(cut_edges(g, 0.5).edges()) == {(2, 3), (1, 3), (1, 2)}

    def test_cut_count(self):
        assert cut_count(10, 0.6) == 6
        assert cut_count(28, 0.6) == 17
        assert cut_count(5, 0.0) == 0


class TestAggregate:
    def test_identical(self):
        g = random_graph(np.random.default_rng(8))
        comp = aggregate_adjacency([g, g, g])
        np.testing.assert_allclose(comp.matrix, g.weights)
        assert comp.source_count == 3 and comp.mode == OVER_SUBGRAPHS

    def test_absent_counts_as_zero(self):
        a = from_edges(2, [(0, 1, 2.0)])
        b = graph(np.array([[0, 2.0], [2.0, 0]]), np.zeros((2, 2), bool))
        assert aggregate_adjacency([a, b]).matrix[0, 1] == 1.0

    def test_order_mismatch(self):
        a = from_edges(2, [(0, 1)])
        b = from_edges(2, [(0, 1)])
        b.nodes[0] = b.nodes[1]
        with pytest.raises(OrderMismatchError):
            aggregate_adjacency([a, b])

    def test_property_sweep(self):
        rng = np.random.default_rng(9)
        gs = [cut_edges(random_graph(rng), 0.6) for _ in range(1000)]
        comp = aggregate_adjacency(gs)
        m = comp.matrix
        np.testing.assert_array_equal(m, m.T)
        assert np.all(np.diag(m) == 0) and np.all(m >= 0)
        w = np.stack([g.weights for g in gs])
        p = np.stack([g.present for g in gs])
        np.testing.assert_allclose(aggregate_matrices(w, p).matrix, m, rtol=1e-12)

    def test_over_iterations_and_io(self, tmp_path):
        g = random_graph(np.random.default_rng(10))
        traj = evolve(g, 0.5, 4)
        comp = aggregate_adjacency(trajectory_graphs(g, traj), OVER_ITERATIONS)
        np.testing.assert_allclose(comp.matrix, np.mean(traj.states[1:], axis=0) * g.present)
        comp.meta = {"alpha": 0.5}
        comp.save(tmp_path)
        back = CompositeAdjacency.load(tmp_path)
        np.testing.assert_array_equal(back.matrix, comp.matrix)
        assert back.mode == OVER_ITERATIONS and back.meta == {"alpha": 0.5}
        with pytest.raises(ValueError):
            aggregate_adjacency([g], "nope")
