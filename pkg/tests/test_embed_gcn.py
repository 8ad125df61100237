import numpy as np
import pytest

from eeg_ricci.embed_gcn import (
    PARAM_NAMES, GcnParams, GcnTrainConfig, distance_loss, embed, gcn_forward, gcn_gradient,
    init_gcn_params, load_gcn, normalized_adjacency, read_embeddings_csv, save_gcn,
    standardize_rows, target_distances, target_scale, train_gcn, write_embeddings_csv,
)
from eeg_ricci.errors import ShapeError
from eeg_ricci.manifold_graph import build_subgraph
from eeg_ricci.ricci_flow import aggregate_adjacency, cut_edges, evolve
from eeg_ricci.signal_io import synth_dataset
from eeg_ricci.spectral import reduce_epoch

from oracles import gcn_forward_loops, grad_check


def _adj(rng, n=8):
    a = np.triu(rng.uniform(0, 1, (n, n)) * (rng.random((n, n)) < 0.6), 1)
    return a + a.T


def _instance(seed, b=5, n=8, f=12, h=10, o=9):
    rng = np.random.default_rng(seed)
    params = init_gcn_params(seed, f, h, o)
    return params, _adj(rng, n), rng.standard_normal((b, n, f)), rng


def gcn_pattern(params, a, x, target):
    cache = {}
    z = gcn_forward(params, a, x, cache).z
    d = np.linalg.norm(z[:, None] - z[None], axis=2)
    return (cache["p1"] > 0).tobytes() + (cache["p2"] > 0).tobytes() + (d > 0).tobytes()


def gcn_fd_errors(params, a, x, target, n_coords, rng):
    p = vars(params)
    _, grads = gcn_gradient(params, x, a, target)
    return grad_check(lambda: gcn_gradient(params, x, a, target)[0],
                      lambda: gcn_pattern(params, a, x, target),
                      p, vars(grads), PARAM_NAMES, n_coords, rng)


class TestForward:
    def test_zero_params(self):
        _, a, x, _ = _instance(0)
        out = gcn_forward(GcnParams.zeros(12, 10, 9), a, x[0])
        assert not out.H1.any() and not out.H2.any() and not out.z.any()

    def test_identity_skip(self):
        _, a, x, _ = _instance(1, f=6, h=6, o=6)
        p = GcnParams(np.zeros((6, 6)), np.eye(6), np.zeros((6, 6)), np.eye(6))
        out = gcn_forward(p, a, x[0])
        np.testing.assert_array_equal(out.H2, x[0])
        np.testing.assert_allclose(out.z, x[0].mean(axis=0), atol=1e-15)
        np.testing.assert_allclose(embed(p, a, x[0]), x[0].mean(axis=0), atol=1e-15)

    @pytest.mark.parametrize("seed", range(4))
    def test_loop_oracle(self, seed):
        params, a, x, _ = _instance(seed)
        out = gcn_forward(params, a, x[0])
        h1, h2, z = gcn_forward_loops(params.W1, params.Wskip1, params.W2, params.Wskip2, a, x[0])
        np.testing.assert_allclose(out.H1, h1, atol=1e-10)
        np.testing.assert_allclose(out.H2, h2, atol=1e-10)
        np.testing.assert_allclose(out.z, z, atol=1e-10)

    def test_batch_matches_single(self):
        params, a, x, _ = _instance(5)
        zb = embed(params, a, x)
        for k in range(len(x)):
            np.testing.assert_allclose(zb[k], embed(params, a, x[k]), atol=1e-12)
            assert np.array_equal(embed(params, a, x[k]), gcn_forward(params, a, x[k]).z)

    def test_shape_errors(self):
        params, a, x, _ = _instance(6)
        with pytest.raises(ShapeError):
            gcn_forward(params, a[:7], x[0])
        with pytest.raises(ShapeError):
            gcn_forward(params, a, x[0][:, :5])
        with pytest.raises(ShapeError):
            gcn_forward(params, np.ones((8, 7)), x[0])

    def test_normalized_adjacency(self):
        a = normalized_adjacency(np.array([[0, 1.0], [1.0, 0]]))
        np.testing.assert_allclose(a, np.full((2, 2), 0.5))


class TestLoss:
    def test_exact_targets(self):
        # integer coordinates keep every squared distance exact
        z = np.random.default_rng(0).integers(-5, 6, (6, 4)).astype(float)
        d = np.linalg.norm(z[:, None] - z[None], axis=2)
        assert distance_loss(z, d) == 0.0

    def test_two_identical(self):
        assert distance_loss(np.ones((2, 3)), np.array([[0, 1.0], [1.0, 0]])) == 1.0

    def test_double_loop(self):
        rng = np.random.default_rng(1)
        z, t = rng.standard_normal((7, 5)), rng.uniform(0, 2, (7, 7))
        t = (t + t.T) / 2
        total, count = 0.0, 0
        for i in range(7):
            for j in range(i + 1, 7):
                total += (np.sqrt(sum((z[i, k] - z[j, k]) ** 2 for k in range(5))) - t[i, j]) ** 2
                count += 1
        assert distance_loss(z, t) == pytest.approx(total / count, abs=1e-12)

    def test_targets(self):
        x = np.random.default_rng(2).standard_normal((10, 8, 4))
        s = target_scale(x)
        d = target_distances(x, s)
        assert d[np.triu_indices(10, 1)].mean() == pytest.approx(1.0)
        assert d[0, 1] == pytest.approx(np.linalg.norm(x[0] - x[1]) / s)
        assert target_scale(np.ones((3, 2, 2))) == 1.0

    def test_standardize(self):
        x = np.vstack([np.arange(5.0), np.full(5, 3.0)])
        s = standardize_rows(x)
        np.testing.assert_allclose(s[0].mean(), 0, atol=1e-15)
        np.testing.assert_allclose(s[0].std(), 1)
        assert not s[1].any()


class TestGradient:
    def test_all_zero_params(self):
        params, a, x, _ = _instance(0)
        t = target_distances(x, 1.0)
        _, g = gcn_gradient(GcnParams.zeros(12, 10, 9), x, a, t)
        for k in PARAM_NAMES:
            assert not getattr(g, k).any()

    def test_zero_conv_weights(self):
        params, a, x, rng = _instance(1)
        params.W1[:] = 0
        params.W2[:] = 0
        loss, g = gcn_gradient(params, x, a, target_distances(x, target_scale(x)))
        assert loss > 0
        assert not g.W1.any() and not g.W2.any()
        assert np.abs(g.Wskip1).max() > 1e-6 and np.abs(g.Wskip2).max() > 1e-6
        errs = gcn_fd_errors(params, a, x, target_distances(x, target_scale(x)), 32, rng)
        assert max(errs) < 1e-4

    @pytest.mark.parametrize("seed", range(3))
    def test_finite_differences(self, seed):
        params, a, x, rng = _instance(seed)
        errs = gcn_fd_errors(params, a, x, target_distances(x, target_scale(x)), 64, rng)
        assert max(errs) < 1e-4

    def test_duplicate_batch(self):
        params, a, x, _ = _instance(2)
        xs = np.repeat(x[:1], 4, axis=0)
        loss, g = gcn_gradient(params, xs, a, np.zeros((4, 4)))
        assert loss == 0.0
        for k in PARAM_NAMES:
            assert not getattr(g, k).any()

    def test_batch_shape(self):
        params, a, x, _ = _instance(3)
        with pytest.raises(ShapeError):
            gcn_gradient(params, x[0], a, np.zeros((1, 1)))


@pytest.fixture(scope="module")
def toy_data():
    samples = [reduce_epoch(e) for e in synth_dataset(24, seed=5, n=64)]
    graphs = [build_subgraph(s) for s in samples]
    finals = [cut_edges(g.with_weights(evolve(g, 0.5, 3).final), 0.6) for g in graphs]
    a = aggregate_adjacency(finals).matrix
    x = standardize_rows(np.stack([s.features for s in samples]))
    return a, x


class TestTraining:
    def test_zero_lr(self, toy_data):
        a, x = toy_data
        cfg = GcnTrainConfig(epochs=100, learning_rate=0.0, hidden=16, batch_size=8)
        init = init_gcn_params(0, 32, 16, 16)
        params, _ = train_gcn(a, x, cfg, init)
        for k in PARAM_NAMES:
            np.testing.assert_array_equal(getattr(params, k), getattr(init, k))

    def test_deterministic(self, toy_data):
        a, x = toy_data
        cfg = GcnTrainConfig(epochs=5, hidden=16, batch_size=8, seed=3)
        p1, l1 = train_gcn(a, x, cfg)
        p2, l2 = train_gcn(a, x, cfg)
        assert l1 == l2
        for k in PARAM_NAMES:
            assert np.array_equal(getattr(p1, k), getattr(p2, k))

    def test_loss_decreases(self, toy_data):
        a, x = toy_data
        for seed in range(20):
            _, losses = train_gcn(a, x, GcnTrainConfig(epochs=15, hidden=16, batch_size=8,
                                                       seed=seed))
            assert losses[-1] < losses[0]

    def test_needs_two_samples(self, toy_data):
        a, x = toy_data
        with pytest.raises(ShapeError):
            train_gcn(a, x[:1])


def test_persistence(tmp_path):
    params = init_gcn_params(0, 6, 5, 4)
    save_gcn(params, tmp_path / "p.npz", GcnTrainConfig(), [1.0, 0.5])
    back, meta = load_gcn(tmp_path / "p.npz")
    for k in PARAM_NAMES:
        np.testing.assert_array_equal(getattr(back, k), getattr(params, k))
    assert meta["losses"] == [1.0, 0.5]
    z = np.random.default_rng(0).standard_normal((3, 4))
    write_embeddings_csv(tmp_path / "e.csv", [5, 6, 7], [0, -1, 3], z)
    ids, labels, zb = read_embeddings_csv(tmp_path / "e.csv")
    assert ids.tolist() == [5, 6, 7] and labels.tolist() == [0, -1, 3]
    np.testing.assert_array_equal(zb, z)
