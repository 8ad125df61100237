"""Two-layer graph convolutional network with skip connections.

Each layer computes ``H' = relu(A H W) + H W_skip``; the second layer's node
rows are mean-pooled into one embedding per sample. Training minimises the
squared mismatch between embedding distances and input-feature distances,
with gradients written out by hand.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import DivergenceError, ShapeError
from .optim import Adam

PARAM_NAMES = ("W1", "Wskip1", "W2", "Wskip2")


@dataclass
class GcnParams:
    W1: np.ndarray
    Wskip1: np.ndarray
    W2: np.ndarray
    Wskip2: np.ndarray

    def copy(self) -> "GcnParams":
        return GcnParams(*(getattr(self, k).copy() for k in PARAM_NAMES))

    @classmethod
    def zeros(cls, d_in=256, hidden=256, d_out=256) -> "GcnParams":
        return cls(np.zeros((d_in, hidden)), np.zeros((d_in, hidden)),
                   np.zeros((hidden, d_out)), np.zeros((hidden, d_out)))


@dataclass
class GcnTrainConfig:
    epochs: int = 100
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # samples per step; every pair inside a step enters the loss
    batch_size: int = 32
    hidden: int = 256
    seed: int = 0
    normalize_adjacency: bool = False


def init_gcn_params(seed: int, d_in: int = 256, hidden: int = 256, d_out: int = 256) -> GcnParams:
    """Uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``."""
    rng = np.random.default_rng(seed)

    def u(fan_in, fan_out):
        b = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-b, b, size=(fan_in, fan_out))

    return GcnParams(u(d_in, hidden), u(d_in, hidden), u(hidden, d_out), u(hidden, d_out))


def normalized_adjacency(a) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2``; optional alternative to the raw matrix."""
    a = np.asarray(a, dtype=float) + np.eye(len(a))
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d[:, None] * d[None, :]


def _check(params: GcnParams, a, x):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"adjacency must be square, got {a.shape}")
    if x.shape[-2] != a.shape[0]:
        raise ShapeError(f"{x.shape[-2]} feature rows for a {a.shape[0]}-node adjacency")
    if x.shape[-1] != params.W1.shape[0] or params.W1.shape != params.Wskip1.shape:
        raise ShapeError("input width does not match first-layer weights")
    if params.W2.shape[0] != params.W1.shape[1] or params.W2.shape != params.Wskip2.shape:
        raise ShapeError("hidden width does not match second-layer weights")


@dataclass
class GcnOutput:
    H1: np.ndarray
    H2: np.ndarray
    z: np.ndarray


def gcn_forward(params: GcnParams, a, x, _cache: dict | None = None) -> GcnOutput:
    """Forward pass for one ``(nodes, features)`` sample or a stacked batch."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    _check(params, a, x)
    ax = a @ x
    p1 = ax @ params.W1
    h1 = np.maximum(p1, 0.0) + x @ params.Wskip1
    ah1 = a @ h1
    p2 = ah1 @ params.W2
    h2 = np.maximum(p2, 0.0) + h1 @ params.Wskip2
    if _cache is not None:
        _cache.update(ax=ax, p1=p1, h1=h1, ah1=ah1, p2=p2)
    return GcnOutput(h1, h2, h2.mean(axis=-2))


def embed(params: GcnParams, a, x) -> np.ndarray:
    return gcn_forward(params, a, x).z


def pairwise_distances(z) -> np.ndarray:
    diff = z[:, None, :] - z[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def distance_loss(z, target) -> float:
    """Mean over pairs ``i < j`` of ``(|z_i - z_j| - target_ij)**2``."""
    z = np.asarray(z, dtype=float)
    target = np.asarray(target, dtype=float)
    iu = np.triu_indices(len(z), 1)
    if len(iu[0]) == 0:
        return 0.0
    d = pairwise_distances(z)
    return float(np.mean((d[iu] - target[iu]) ** 2))


def _loss_grad_z(z, target):
    b = len(z)
    n_pairs = b * (b - 1) / 2
    d = pairwise_distances(z)
    iu = np.triu_indices(b, 1)
    loss = float(np.mean((d[iu] - target[iu]) ** 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        coef = np.where(d > 0, (d - target) / d, 0.0)
    np.fill_diagonal(coef, 0.0)
    gz = (2.0 / n_pairs) * (coef.sum(axis=1)[:, None] * z - coef @ z)
    return loss, gz


def gcn_gradient(params: GcnParams, x, a, target) -> tuple[float, GcnParams]:
    """Loss and exact parameter gradients for a batch ``x`` of shape ``(B, n, F)``.

    The rectifier's derivative at 0 is taken as 0, as is the derivative of
    the Euclidean norm at a zero difference.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    if x.ndim != 3 or len(x) < 2:
        raise ShapeError("batch must have shape (B>=2, nodes, features)")
    cache: dict = {}
    out = gcn_forward(params, a, x, cache)
    loss, gz = _loss_grad_z(out.z, target)

    n_nodes = x.shape[1]
    g_h2 = np.broadcast_to(gz[:, None, :] / n_nodes, out.H2.shape)
    g_p2 = g_h2 * (cache["p2"] > 0)
    h_dim, o_dim = params.W2.shape
    g_w2 = cache["ah1"].reshape(-1, h_dim).T @ g_p2.reshape(-1, o_dim)
    g_s2 = cache["h1"].reshape(-1, h_dim).T @ g_h2.reshape(-1, o_dim)
    g_h1 = a.T @ (g_p2 @ params.W2.T) + g_h2 @ params.Wskip2.T
    g_p1 = g_h1 * (cache["p1"] > 0)
    f_dim = params.W1.shape[0]
    g_w1 = cache["ax"].reshape(-1, f_dim).T @ g_p1.reshape(-1, h_dim)
    g_s1 = x.reshape(-1, f_dim).T @ g_h1.reshape(-1, h_dim)
    return loss, GcnParams(g_w1, g_s1, g_w2, g_s2)


def standardize_rows(x) -> np.ndarray:
    """Zero-mean, unit-variance node rows; constant rows become zero."""
    x = np.asarray(x, dtype=float)
    mu = x.mean(axis=-1, keepdims=True)
    sd = x.std(axis=-1, keepdims=True)
    return np.divide(x - mu, sd, out=np.zeros_like(x), where=sd > 0)


def target_scale(x) -> float:
    """Mean pairwise Frobenius distance, used to rescale targets to mean 1."""
    flat = np.asarray(x, dtype=float).reshape(len(x), -1)
    d = pdist(flat)
    m = float(d.mean()) if len(d) else 0.0
    return m if m > 0 else 1.0


def target_distances(x, scale: float) -> np.ndarray:
    flat = np.asarray(x, dtype=float).reshape(len(x), -1)
    return squareform(pdist(flat)) / scale


def train_gcn(a, x, config: GcnTrainConfig | None = None,
              init: GcnParams | None = None) -> tuple[GcnParams, list[float]]:
    """Fit the network on stacked features ``x`` of shape ``(n, nodes, F)``.

    Each epoch shuffles the samples into batches of ``config.batch_size`` and
    takes one Adam step per batch. Returns the parameters and the mean batch
    loss of every epoch.
    """
    cfg = config or GcnTrainConfig()
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        raise ShapeError("need at least two samples")
    a = np.asarray(a, dtype=float)
    if cfg.normalize_adjacency:
        a = normalized_adjacency(a)
    params = (init.copy() if init is not None
              else init_gcn_params(cfg.seed, x.shape[-1], cfg.hidden, cfg.hidden))
    delta = target_distances(x, target_scale(x))
    opt = Adam(vars(params), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng([cfg.seed, 1])
    bs = max(2, cfg.batch_size)
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        batch_losses = []
        for start in range(0, len(order), bs):
            idx = order[start:start + bs]
            if len(idx) < 2:
                continue
            loss, grads = gcn_gradient(params, x[idx], a, delta[np.ix_(idx, idx)])
            if not np.isfinite(loss):
                raise DivergenceError(f"GCN loss became {loss} in epoch {epoch}")
            opt.step(vars(grads))
            batch_losses.append(loss)
        losses.append(float(np.mean(batch_losses)))
    return params, losses


def save_gcn(params: GcnParams, path, config: GcnTrainConfig | None = None, losses=None) -> None:
    path = Path(path)
    meta = {"shapes": {k: list(getattr(params, k).shape) for k in PARAM_NAMES},
            "config": asdict(config) if config else None,
            "losses": list(losses) if losses is not None else None}
    np.savez(path, meta=json.dumps(meta), **{k: getattr(params, k) for k in PARAM_NAMES})


def load_gcn(path) -> tuple[GcnParams, dict]:
    with np.load(path) as f:
        params = GcnParams(*(f[k] for k in PARAM_NAMES))
        meta = json.loads(str(f["meta"]))
    return params, meta


def write_embeddings_csv(path, event_ids: Sequence[int], labels: Sequence[int], z) -> None:
    z = np.asarray(z)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["event_id", "label"] + [f"z{k}" for k in range(z.shape[1])])
        for e, lab, row in zip(event_ids, labels, z):
            w.writerow([int(e), int(lab)] + [repr(float(v)) for v in row])


def read_embeddings_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    ids = np.array([int(r[0]) for r in rows])
    labels = np.array([int(r[1]) for r in rows])
    z = np.array([[float(v) for v in r[2:]] for r in rows])
    return ids, labels, z
