"""Power spectra, graph Laplacians, eigenmap reduction and denoising metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import (
    AsymmetryError,
    ConvergenceError,
    DataError,
    OddLengthError,
    ZeroSignalError,
    ZeroVarianceError,
)
from .signal_io import MultiChannelEpoch, rms

DEFAULT_PAIRS = (("FP1", "FP2"), ("TP9", "TP10"))
DEFAULT_D_OUT = 256
# dense eigensolver up to this many nodes, iterative above
DENSE_EIGEN_LIMIT = 4096

REDUCED_STORE_SCHEMA = "eeg-ricci/reduced/1"


def one_sided_power_spectrum(x) -> np.ndarray:
    """Squared DFT magnitudes for bins ``0 .. N/2 - 1``.

    Works along the last axis, so a ``(channels, N)`` block yields
    ``(channels, N/2)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if n < 2 or n % 2:
        raise OddLengthError(f"signal length must be even and >= 2, got {n}")
    spec = np.fft.rfft(x, axis=-1)[..., : n // 2]
    return spec.real**2 + spec.imag**2


def bin_frequencies(n: int, fs: float) -> np.ndarray:
    return np.arange(n // 2) * (fs / n)


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise DataError("pearson needs two equal-length vectors of length >= 2")
    da = a - a.mean()
    db = b - b.mean()
    ssa = np.dot(da, da)
    ssb = np.dot(db, db)
    if ssa == 0 or ssb == 0:
        raise ZeroVarianceError("correlation undefined for a constant vector")
    # one sqrt of the product keeps pearson(x, x) exactly 1
    return float(np.clip(np.dot(da, db) / np.sqrt(ssa * ssb), -1.0, 1.0))


def graph_laplacian(adjacency) -> np.ndarray:
    """Combinatorial Laplacian ``D - A`` of a symmetric weighted adjacency."""
    a = np.asarray(adjacency, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise AsymmetryError(f"adjacency must be square, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * scale):
        raise AsymmetryError("adjacency is not symmetric")
    if np.any(np.diag(a) != 0):
        raise AsymmetryError("adjacency must have a zero diagonal")
    return np.diag(a.sum(axis=1)) - a


@dataclass
class LaplacianEigenbasis:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns
    node_index: dict = field(default_factory=dict)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip each column so its first non-negligible entry is positive."""
    vecs = vecs.copy()
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        tol = 1e-10 * np.abs(col).max(initial=0.0)
        nz = np.flatnonzero(np.abs(col) > tol)
        if len(nz) and col[nz[0]] < 0:
            vecs[:, j] = -col
    return vecs


def spectral_eigenbasis(laplacian, k: int, node_index: dict | None = None) -> LaplacianEigenbasis:
    """The ``k`` smallest eigenpairs of a symmetric PSD matrix, ascending."""
    lap = np.asarray(laplacian, dtype=float)
    n = lap.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if n <= DENSE_EIGEN_LIMIT:
        vals, vecs = scipy.linalg.eigh(lap, subset_by_index=[0, k - 1])
    else:
        v0 = np.linspace(1.0, 2.0, n)
        try:
            vals, vecs = scipy.sparse.linalg.eigsh(
                scipy.sparse.csr_matrix(lap), k=k, sigma=-1e-3, which="LM", v0=v0, maxiter=50 * n
            )
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise ConvergenceError(
                f"eigsh did not converge: {len(exc.eigenvalues)}/{k} eigenpairs",
                iterations=50 * n,
            ) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    return LaplacianEigenbasis(vals, _fix_signs(vecs), dict(node_index or {}))


def _components(channels: Sequence[str], pairs) -> list[list[str]]:
    parent = {c: c for c in channels}

    def find(c):
        while parent[c] != c:
            c = parent[c]
        return c

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb, key=channels.index)] = min(ra, rb, key=channels.index)
    groups: dict[str, list[str]] = {}
    for c in channels:
        groups.setdefault(find(c), []).append(c)
    return list(groups.values())


def joint_channel_graph(channels: Sequence[str], pairs, n: int) -> tuple[np.ndarray, dict]:
    """Adjacency over (channel, time) nodes.

    Unit edges join consecutive time points within a channel, and unit
    coupling edges join paired channels at equal time index.
    """
    channels = list(channels)
    size = len(channels) * n
    adj = np.zeros((size, size))
    idx = np.arange(n - 1)
    for b in range(len(channels)):
        off = b * n
        adj[off + idx, off + idx + 1] = 1.0
        adj[off + idx + 1, off + idx] = 1.0
    for a, c in pairs:
        if a not in channels or c not in channels:
            raise DataError(f"pair ({a}, {c}) not among channels {channels}")
        oa, oc = channels.index(a) * n, channels.index(c) * n
        t = np.arange(n)
        adj[oa + t, oc + t] = 1.0
        adj[oc + t, oa + t] = 1.0
    node_index = {(ch, t): b * n + t for b, ch in enumerate(channels) for t in range(n)}
    return adj, node_index


@lru_cache(maxsize=16)
def _block_projectors(n_channels: int, local_pairs: tuple, n: int, d_out: int) -> np.ndarray:
    """Column-normalised eigenvector blocks, shape ``(n_channels, n, d_out)``."""
    names = [str(i) for i in range(n_channels)]
    pairs = [(names[a], names[b]) for a, b in local_pairs]
    adj, _ = joint_channel_graph(names, pairs, n)
    basis = spectral_eigenbasis(graph_laplacian(adj), d_out)
    blocks = basis.eigenvectors.reshape(n_channels, n, d_out).copy()
    norms = np.linalg.norm(blocks, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        blocks = np.where(norms > 1e-12, blocks / norms, 0.0)
    blocks.setflags(write=False)
    return blocks


def eigenmap_reduce(
    epoch: MultiChannelEpoch,
    pairs=DEFAULT_PAIRS,
    d_out: int = DEFAULT_D_OUT,
) -> dict[str, np.ndarray]:
    """Project every channel onto the low-frequency Laplacian eigenvectors.

    Each connected component of the joint (channel x time) graph gets its own
    ``d_out`` smallest eigenvectors; channel ``c``'s coordinate ``j`` is the
    inner product of its signal with eigenvector ``j`` restricted to ``c``'s
    node block, renormalised to unit length.
    """
    channels = list(epoch.channels)
    n = epoch.n_samples
    if not 1 <= d_out <= n:
        raise ValueError(f"d_out must lie in [1, {n}]")
    for a, b in pairs:
        if a not in channels or b not in channels:
            raise DataError(f"pair ({a}, {b}) not among epoch channels {channels}")
    out = {}
    for comp in _components(channels, pairs):
        local = tuple(sorted(
            tuple(sorted((comp.index(a), comp.index(b)))) for a, b in pairs if a in comp
        ))
        blocks = _block_projectors(len(comp), local, n, d_out)
        for k, ch in enumerate(comp):
            out[ch] = np.asarray(epoch.channels[ch], dtype=float) @ blocks[k]
    return {c: out[c] for c in channels}


@dataclass
class ReducedSample:
    """Per-event node features, rows ordered time rows then frequency rows."""

    event_id: int
    label: int
    features: np.ndarray  # (2 * n_channels, d)
    channels: tuple[str, ...]

    @property
    def time_rows(self) -> np.ndarray:
        return self.features[: len(self.channels)]

    @property
    def freq_rows(self) -> np.ndarray:
        return self.features[len(self.channels):]


def reduce_epoch(epoch: MultiChannelEpoch, pairs=DEFAULT_PAIRS, d_out: int | None = None) -> ReducedSample:
    n = epoch.n_samples
    d_out = n // 2 if d_out is None else d_out
    if d_out != n // 2:
        raise DataError("time and frequency vectors must share length N/2")
    time_vecs = eigenmap_reduce(epoch, pairs, d_out)
    freq = one_sided_power_spectrum(epoch.matrix())
    feats = np.vstack([np.stack(list(time_vecs.values())), freq])
    return ReducedSample(epoch.event_id, epoch.label, feats, tuple(epoch.channels))


@dataclass
class DenoiseScore:
    cc: float
    t_rrmse: float
    s_rrmse: float


def t_rrmse(est, truth) -> float:
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    r = rms(truth)
    if r == 0:
        raise ZeroSignalError("truth has zero RMS")
    return rms(est - truth) / r


def s_rrmse(est, truth) -> float:
    p_est = one_sided_power_spectrum(est)
    p_truth = one_sided_power_spectrum(truth)
    r = rms(p_truth)
    if r == 0:
        raise ZeroSignalError("truth has zero spectral power")
    return rms(p_est - p_truth) / r


def denoise_metrics(est, truth, on_zero_variance: str = "raise") -> DenoiseScore:
    """Correlation, temporal and spectral relative RMSE of an estimate.

    With ``on_zero_variance="nan"`` a constant estimate yields ``cc = nan``
    instead of raising :class:`ZeroVarianceError`.
    """
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise DataError("estimate and truth must have equal length")
    t = t_rrmse(est, truth)
    try:
        cc = pearson(est, truth)
    except ZeroVarianceError:
        if on_zero_variance != "nan":
            raise
        cc = float("nan")
    return DenoiseScore(cc, t, s_rrmse(est, truth))


def mask_low_correlation_segments(raw, denoised, window: int, threshold: float = 0.8) -> np.ndarray:
    """Flag windows whose raw/denoised correlation falls below ``threshold``.

    Constant windows carry no evidence and are always flagged.
    """
    raw = np.asarray(raw, dtype=float)
    denoised = np.asarray(denoised, dtype=float)
    if raw.shape != denoised.shape:
        raise DataError("raw and denoised must have equal length")
    if window < 2 or len(raw) % window:
        raise DataError(f"window {window} must be >= 2 and divide length {len(raw)}")
    mask = np.empty(len(raw) // window, dtype=bool)
    for w in range(len(mask)):
        sl = slice(w * window, (w + 1) * window)
        try:
            mask[w] = pearson(raw[sl], denoised[sl]) < threshold
        except ZeroVarianceError:
            mask[w] = True
    return mask


# -- reduced-sample store -----------------------------------------------------


def save_reduced(samples: Sequence[ReducedSample], out_dir, partition: Sequence[str] | None = None,
                 extra: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "reduced.npy", np.stack([s.features for s in samples]))
    channels = list(samples[0].channels)
    rows = [f"{c}_t" for c in channels] + [f"{c}_f" for c in channels]
    manifest = {
        "schema": REDUCED_STORE_SCHEMA,
        "channels": channels,
        "row_order": rows,
        "data": "reduced.npy",
        "events": [
            {"event_id": int(s.event_id), "label": int(s.label),
             "partition": (partition[i] if partition is not None else "train")}
            for i, s in enumerate(samples)
        ],
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return out


def load_reduced(store_dir) -> tuple[list[ReducedSample], list[str]]:
    store = Path(store_dir)
    manifest = json.loads((store / "manifest.json").read_text())
    if manifest.get("schema") != REDUCED_STORE_SCHEMA:
        raise DataError(f"{store}: not a reduced-sample store")
    data = np.load(store / manifest["data"])
    channels = tuple(manifest["channels"])
    samples = [
        ReducedSample(ev["event_id"], ev["label"], data[i], channels)
        for i, ev in enumerate(manifest["events"])
    ]
    return samples, [ev["partition"] for ev in manifest["events"]]
