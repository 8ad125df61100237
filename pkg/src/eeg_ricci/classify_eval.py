"""Lightweight 1D CNN over embeddings, binary metrics and bootstrap intervals.

Architecture (input length 256, 'valid' convolutions)::

    conv(8 x 1 x 5) -> relu -> maxpool(2) -> conv(32 x 8 x 5) -> relu
    -> maxpool(2) -> flatten(32 * 61) -> dense(2) -> softmax

which totals 5,266 parameters. Class index 1 is the digit (positive) class.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import logsumexp
from scipy.stats import rankdata

from .errors import DivergenceError, ShapeError, SingleClassError
from .optim import Adam

CNN_PARAM_NAMES = ("K1", "b1", "K2", "b2", "Wd", "bd")


@dataclass
class CnnParams:
    K1: np.ndarray  # (filters, in_channels, width)
    b1: np.ndarray
    K2: np.ndarray
    b2: np.ndarray
    Wd: np.ndarray  # (flat, 2)
    bd: np.ndarray

    def count(self) -> int:
        return sum(getattr(self, k).size for k in CNN_PARAM_NAMES)

    def copy(self) -> "CnnParams":
        return CnnParams(*(getattr(self, k).copy() for k in CNN_PARAM_NAMES))


def _flat_len(input_len, width, pool=2):
    l1 = (input_len - width + 1) // pool
    return (l1 - width + 1) // pool


def init_cnn_params(seed: int, input_len: int = 256, filters1: int = 8, filters2: int = 32,
                    width: int = 5, zero: bool = False) -> CnnParams:
    rng = np.random.default_rng(seed)
    flat = filters2 * _flat_len(input_len, width)
    shapes = [((filters1, 1, width), width), ((filters1,), width),
              ((filters2, filters1, width), filters1 * width), ((filters2,), filters1 * width),
              ((flat, 2), flat), ((2,), flat)]
    arrs = []
    for shape, fan_in in shapes:
        if zero:
            arrs.append(np.zeros(shape))
        else:
            b = 1.0 / np.sqrt(fan_in)
            arrs.append(rng.uniform(-b, b, size=shape))
    return CnnParams(*arrs)


def _conv(x, k, b):
    win = sliding_window_view(x, k.shape[2], axis=2)  # (B, C, L', w)
    return np.einsum("bclw,fcw->bfl", win, k, optimize=True) + b[None, :, None], win


def _conv_back(g, win, k, in_len):
    gk = np.einsum("bfl,bclw->fcw", g, win, optimize=True)
    gb = g.sum(axis=(0, 2))
    gx = np.zeros((g.shape[0], k.shape[1], in_len))
    n_out = g.shape[2]
    for w in range(k.shape[2]):
        gx[:, :, w:w + n_out] += np.einsum("bfl,fc->bcl", g, k[:, :, w], optimize=True)
    return gx, gk, gb


def _pool(x):
    b, c, l = x.shape
    pairs = x[:, :, : l // 2 * 2].reshape(b, c, l // 2, 2)
    pick = pairs[..., 1] > pairs[..., 0]
    return np.where(pick, pairs[..., 1], pairs[..., 0]), pick


def _pool_back(g, pick, in_len):
    b, c, half = g.shape
    out = np.zeros((b, c, half, 2))
    out[..., 1] = np.where(pick, g, 0.0)
    out[..., 0] = np.where(pick, 0.0, g)
    gx = np.zeros((b, c, in_len))
    gx[:, :, : half * 2] = out.reshape(b, c, half * 2)
    return gx


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward(params: CnnParams, z, cache=None):
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[None]
    if z.ndim != 2:
        raise ShapeError(f"embeddings must be (B, L), got {z.shape}")
    x0 = z[:, None, :]
    c1, w1 = _conv(x0, params.K1, params.b1)
    r1 = np.maximum(c1, 0.0)
    p1, pick1 = _pool(r1)
    c2, w2 = _conv(p1, params.K2, params.b2)
    r2 = np.maximum(c2, 0.0)
    p2, pick2 = _pool(r2)
    flat = p2.reshape(len(z), -1)
    if flat.shape[1] != params.Wd.shape[0]:
        raise ShapeError(f"input length {z.shape[1]} does not fit dense layer {params.Wd.shape}")
    logits = flat @ params.Wd + params.bd
    if cache is not None:
        cache.update(w1=w1, c1=c1, r1=r1, pick1=pick1, p1=p1, w2=w2, c2=c2, r2=r2,
                     pick2=pick2, p2=p2, flat=flat, logits=logits, L=z.shape[1])
    return _softmax(logits)


def cnn_forward(params: CnnParams, z) -> np.ndarray | float:
    """Digit-class probability for one embedding (float) or a batch (array)."""
    probs = _forward(params, z)[:, 1]
    return float(probs[0]) if np.ndim(z) == 1 else probs


def cnn_probabilities(params: CnnParams, z) -> np.ndarray:
    return _forward(params, np.atleast_2d(z))


def _nll(logits, y):
    # log-softmax stays finite when the softmax saturates
    log_p = logits - logsumexp(logits, axis=1, keepdims=True)
    return float(-np.mean(log_p[np.arange(len(y)), y]))


def cross_entropy(params: CnnParams, z, y) -> float:
    cache: dict = {}
    _forward(params, z, cache)
    return _nll(cache["logits"], np.asarray(y, dtype=int))


def cnn_gradient(params: CnnParams, z, y) -> tuple[float, CnnParams]:
    """Mean cross-entropy and its exact gradient; relu'(0) and pool ties go to 0 / left."""
    cache: dict = {}
    p = _forward(params, z, cache)
    y = np.asarray(y, dtype=int)
    n = len(y)
    loss = _nll(cache["logits"], y)
    g_logits = p.copy()
    g_logits[np.arange(n), y] -= 1.0
    g_logits /= n
    g_wd = cache["flat"].T @ g_logits
    g_bd = g_logits.sum(axis=0)
    g_p2 = (g_logits @ params.Wd.T).reshape(cache["p2"].shape)
    g_r2 = _pool_back(g_p2, cache["pick2"], cache["r2"].shape[2])
    g_c2 = g_r2 * (cache["c2"] > 0)
    g_p1, g_k2, g_b2 = _conv_back(g_c2, cache["w2"], params.K2, cache["p1"].shape[2])
    g_r1 = _pool_back(g_p1, cache["pick1"], cache["r1"].shape[2])
    g_c1 = g_r1 * (cache["c1"] > 0)
    _, g_k1, g_b1 = _conv_back(g_c1, cache["w1"], params.K1, cache["L"])
    return loss, CnnParams(g_k1, g_b1, g_k2, g_b2, g_wd, g_bd)


@dataclass
class ClfTrainConfig:
    learning_rate: float = 0.01
    epochs: int = 70
    batch_size: int = 80
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0


def train_cnn(z, y, config: ClfTrainConfig | None = None,
              init: CnnParams | None = None) -> tuple[CnnParams, list[float]]:
    """Minibatch Adam on cross-entropy; returns params and per-epoch mean loss."""
    cfg = config or ClfTrainConfig()
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(np.unique(y)) < 2:
        raise SingleClassError("training labels contain a single class")
    params = init.copy() if init is not None else init_cnn_params(cfg.seed, z.shape[1])
    opt = Adam(vars(params), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng([cfg.seed, 2])
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(z))
        batch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = cnn_gradient(params, z[idx], y[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"classifier loss became {loss} in epoch {epoch}")
            opt.step(vars(grads))
            batch_losses.append(loss)
        losses.append(float(np.mean(batch_losses)))
    return params, losses


def save_cnn(params: CnnParams, path, config: ClfTrainConfig | None = None, losses=None) -> None:
    meta = {"config": asdict(config) if config else None, "count": params.count(),
            "losses": list(losses) if losses is not None else None}
    np.savez(Path(path), meta=json.dumps(meta), **{k: getattr(params, k) for k in CNN_PARAM_NAMES})


def load_cnn(path) -> tuple[CnnParams, dict]:
    with np.load(path) as f:
        return CnnParams(*(f[k] for k in CNN_PARAM_NAMES)), json.loads(str(f["meta"]))


# -- metrics ------------------------------------------------------------------


def confusion(scores, labels, threshold: float = 0.5) -> dict:
    pred = np.asarray(scores, dtype=float) >= threshold
    lab = np.asarray(labels).astype(bool)
    return {"tp": int(np.sum(pred & lab)), "fp": int(np.sum(pred & ~lab)),
            "fn": int(np.sum(~pred & lab)), "tn": int(np.sum(~pred & ~lab))}


def auroc(scores, labels) -> float:
    """Probability a random positive outscores a random negative, ties count 1/2."""
    scores = np.asarray(scores, dtype=float)
    lab = np.asarray(labels).astype(bool)
    n_pos, n_neg = int(lab.sum()), int((~lab).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUROC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[lab].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def _ratio(num, den, what):
    if den == 0:
        raise SingleClassError(f"{what} undefined: no samples in its denominator")
    return num / den


def metric_value(name: str, scores, labels, threshold: float = 0.5) -> float:
    c = confusion(scores, labels, threshold)
    n = sum(c.values())
    if name == "accuracy":
        return (c["tp"] + c["tn"]) / n
    if name == "sensitivity":
        return _ratio(c["tp"], c["tp"] + c["fn"], "sensitivity")
    if name == "specificity":
        return _ratio(c["tn"], c["tn"] + c["fp"], "specificity")
    if name == "f1":
        den = 2 * c["tp"] + c["fp"] + c["fn"]
        return 2 * c["tp"] / den if den else 0.0
    if name == "auroc":
        return auroc(scores, labels)
    raise ValueError(f"unknown metric {name!r}")


METRICS = ("accuracy", "f1", "auroc", "sensitivity", "specificity")


@dataclass
class MetricsReport:
    accuracy: float
    f1: float
    auroc: float
    sensitivity: float
    specificity: float
    confusion: dict
    ci: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def evaluate(scores, labels, threshold: float = 0.5) -> MetricsReport:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    if len(np.unique(labels)) < 2:
        raise SingleClassError("evaluation labels contain a single class")
    vals = {m: metric_value(m, scores, labels, threshold) for m in METRICS}
    return MetricsReport(**vals, confusion=confusion(scores, labels, threshold))


def bootstrap_ci(metric: str, scores, labels, resamples: int = 1000, level: float = 0.95,
                 seed: int = 0, max_retries: int = 100) -> tuple[float, float]:
    """Percentile bootstrap interval over resampled ``(score, label)`` pairs.

    Resamples on which the metric is undefined are redrawn, at most
    ``max_retries`` times each.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    n = len(scores)
    if n == 0:
        raise ValueError("empty evaluation set")
    rng = np.random.default_rng(seed)
    vals = np.empty(resamples)
    for r in range(resamples):
        for _ in range(max_retries):
            idx = rng.integers(0, n, size=n)
            try:
                vals[r] = metric_value(metric, scores[idx], labels[idx])
                break
            except SingleClassError:
                continue
        else:
            raise SingleClassError(f"{metric}: {max_retries} consecutive undefined resamples")
    tail = (1.0 - level) / 2.0 * 100.0
    lo, hi = np.percentile(vals, [tail, 100.0 - tail])
    return float(lo), float(hi)


def evaluate_with_ci(scores, labels, resamples: int = 1000, level: float = 0.95, seed: int = 0) -> MetricsReport:
    report = evaluate(scores, labels)
    report.ci = {m: list(bootstrap_ci(m, scores, labels, resamples, level, seed)) for m in METRICS}
    return report
