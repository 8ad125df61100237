"""End-to-end orchestration with persisted, resumable stages.

Stage layout under the output directory::

    epochs/      epoch store (npy + manifest)
    reduced/     8 x 256 node features per event + train/test partition
    graphs/      initial subgraphs, one JSON document per line
    flow/        trajectories (npz + JSON lines) and post-cut presence masks
    aggregate/   composite adjacency (CSV + JSON)
    gcn/         parameters and embeddings.csv
    clf/         classifier parameters and per-sample scores
    diagnostics/ flow histograms, cut frequencies, curvature summaries
    report.json
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import classify_eval as ce
from . import embed_gcn as eg
from .diagnostics import export_diagnostics
from .errors import BandRangeError, ConfigError, DataError, PipelineError
from .manifold_graph import WeightedSubgraph, build_subgraph
from .ricci_flow import (
    OVER_ITERATIONS,
    OVER_SUBGRAPHS,
    CompositeAdjacency,
    aggregate_matrices,
    cut_edges,
    evolve,
)
from .signal_io import (
    DEFAULT_CHANNELS,
    MultiChannelEpoch,
    assemble_epochs,
    load_epochs,
    read_records,
    save_epochs,
    synth_dataset,
)
from .spectral import (
    DEFAULT_PAIRS,
    load_reduced,
    mask_low_correlation_segments,
    reduce_epoch,
    save_reduced,
)

log = logging.getLogger(__name__)

REPORT_SCHEMA = "eeg-ricci/run-report/1"
STAGES = ("ingest", "reduce", "graph", "flow", "aggregate", "train-gcn", "embed", "train-clf", "eval")


@dataclass
class PipelineConfig:
    source: str = "synthetic"  # "synthetic" or a path to tab-separated records
    synth_count: int = 1000
    synth_seed: int = 0
    channels: tuple = DEFAULT_CHANNELS
    channel_aliases: dict = field(default_factory=dict)
    n: int = 512
    d_out: int = 256
    pairs: tuple = DEFAULT_PAIRS
    denoiser: str = "identity"  # or "bandpass"
    band: tuple = (1.0, 45.0)
    alpha: float = 0.5
    idleness: float = 0.0
    flow_iters: int = 10
    cut_ratio: float = 0.6
    aggregation: str = OVER_SUBGRAPHS
    normalize_mixed: bool = True
    test_fraction: float = 0.2
    split_seed: int = 0
    gcn: eg.GcnTrainConfig = field(default_factory=eg.GcnTrainConfig)
    clf: ce.ClfTrainConfig = field(default_factory=ce.ClfTrainConfig)
    bootstrap_resamples: int = 1000
    bootstrap_seed: int = 0

    def validate(self) -> "PipelineConfig":
        checks = [
            (self.n > 0 and self.n % 2 == 0, "n must be a positive even integer"),
            (self.d_out == self.n // 2, "d_out must equal n / 2"),
            (0 < self.alpha <= 2, "alpha must lie in (0, 2]"),
            (0 <= self.idleness < 1, "idleness must lie in [0, 1)"),
            (self.flow_iters >= 1, "flow_iters must be >= 1"),
            (0 <= self.cut_ratio <= 1, "cut_ratio must lie in [0, 1]"),
            (self.aggregation in (OVER_SUBGRAPHS, OVER_ITERATIONS), "unknown aggregation mode"),
            (0 < self.test_fraction < 1, "test_fraction must lie in (0, 1)"),
            (self.denoiser in ("identity", "bandpass"), "denoiser must be identity or bandpass"),
            (self.gcn.epochs >= 1 and self.gcn.learning_rate >= 0, "bad GCN training config"),
            (self.clf.epochs >= 1 and self.clf.batch_size >= 1, "bad classifier training config"),
            (all(a in self.channels and b in self.channels for a, b in self.pairs),
             "pairs must reference configured channels"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["pairs"] = [list(p) for p in self.pairs]
        d["band"] = list(self.band)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        try:
            if "gcn" in d:
                d["gcn"] = eg.GcnTrainConfig(**d["gcn"])
            if "clf" in d:
                d["clf"] = ce.ClfTrainConfig(**d["clf"])
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        for key in ("channels", "band"):
            if key in d:
                d[key] = tuple(d[key])
        if "pairs" in d:
            d["pairs"] = tuple(tuple(p) for p in d["pairs"])
        return cls(**d).validate()

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None


class StageError(PipelineError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)


# -- denoiser hook ------------------------------------------------------------


def bandpass(x, fs: float, lo: float, hi: float) -> np.ndarray:
    """Zero-phase band-pass by zeroing FFT bins outside ``[lo, hi]`` Hz."""
    x = np.asarray(x, dtype=float)
    if not 0 <= lo < hi <= fs / 2:
        raise BandRangeError(f"band ({lo}, {hi}) Hz invalid for fs = {fs} Hz")
    spec = np.fft.rfft(x, axis=-1)
    freqs = np.fft.rfftfreq(x.shape[-1], 1.0 / fs)
    spec[..., (freqs < lo) | (freqs > hi)] = 0.0
    return np.fft.irfft(spec, x.shape[-1], axis=-1)


def denoiser_hook(epoch: MultiChannelEpoch, spec="identity", band=(1.0, 45.0)) -> MultiChannelEpoch:
    """Apply the configured denoiser channel by channel.

    ``spec`` may also be any callable taking and returning a 1D array, which
    is how an external denoiser plugs in.
    """
    if spec == "identity":
        return epoch
    if spec == "bandpass":
        lo, hi = band
        fn = lambda x: bandpass(x, epoch.fs, lo, hi)  # noqa: E731
    elif callable(spec):
        fn = spec
    else:
        raise ConfigError(f"unknown denoiser {spec!r}")
    chans = type(epoch.channels)((c, np.asarray(fn(v), dtype=float)) for c, v in epoch.channels.items())
    return MultiChannelEpoch(epoch.event_id, chans, epoch.label, epoch.duration_s, epoch.provenance)


def flag_segments(raw: MultiChannelEpoch, denoised: MultiChannelEpoch, window: int = 64,
                  threshold: float = 0.8) -> dict[str, np.ndarray]:
    """Per-channel low-correlation window masks, for external denoisers."""
    return {c: mask_low_correlation_segments(raw.channels[c], denoised.channels[c], window, threshold)
            for c in raw.channels}


# -- stages -------------------------------------------------------------------


def stratified_split(labels: Sequence[int], test_fraction: float, seed: int) -> list[str]:
    """Per-class shuffled split; returns "train"/"test" per sample."""
    labels = np.asarray(labels)
    rng = np.random.default_rng([seed, 3])
    part = np.array(["train"] * len(labels), dtype=object)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        part[idx[: int(round(test_fraction * len(idx)))]] = "test"
    return part.tolist()


def binary_labels(labels) -> np.ndarray:
    return (np.asarray(labels) != -1).astype(int)


def stage_ingest(cfg: PipelineConfig, out_dir) -> dict:
    if cfg.source == "synthetic":
        epochs = synth_dataset(cfg.synth_count, cfg.synth_seed, cfg.n, cfg.channels)
        dropped = 0
    else:
        path = Path(cfg.source)
        if not path.exists():
            raise DataError(f"records file {path} not found")
        epochs, dropped = assemble_epochs(read_records(path, cfg.channel_aliases), cfg.n, cfg.channels)
        if not epochs:
            raise DataError(f"no complete events in {path}")
    save_epochs(epochs, out_dir, {"dropped_events": dropped, "source": cfg.source})
    return {"epochs": len(epochs), "dropped_events": dropped}


def stage_reduce(cfg: PipelineConfig, epochs_dir, out_dir) -> dict:
    epochs = load_epochs(epochs_dir)
    samples = [reduce_epoch(denoiser_hook(e, cfg.denoiser, cfg.band), cfg.pairs, cfg.d_out) for e in epochs]
    bin_labels = binary_labels([s.label for s in samples])
    partition = stratified_split(bin_labels, cfg.test_fraction, cfg.split_seed)
    save_reduced(samples, out_dir, partition)
    return {"samples": len(samples), "test": partition.count("test")}


def stage_graph(cfg: PipelineConfig, reduced_dir, out_dir) -> dict:
    samples, _ = load_reduced(reduced_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "subgraphs.jsonl", "w") as fh:
        for s in samples:
            fh.write(build_subgraph(s, cfg.normalize_mixed).to_json() + "\n")
    return {"subgraphs": len(samples), "adjacency_entries": len(samples) * (2 * len(samples[0].channels)) ** 2}


def load_subgraphs(graphs_dir) -> list[WeightedSubgraph]:
    with open(Path(graphs_dir) / "subgraphs.jsonl") as fh:
        return [WeightedSubgraph.from_json(line) for line in fh if line.strip()]


def stage_flow(cfg: PipelineConfig, graphs_dir, out_dir) -> dict:
    graphs = load_subgraphs(graphs_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    states, curvs, present, cut_present = [], [], [], []
    degenerate = 0
    with open(out / "trajectories.jsonl", "w") as fh:
        for k, g in enumerate(graphs):
            traj = evolve(g, cfg.alpha, cfg.flow_iters, cfg.idleness)
            degenerate += traj.degenerate_count
            for rec in traj.records():
                fh.write(json.dumps({"subgraph": k, **rec}) + "\n")
            final = g.with_weights(traj.final, traj.present)
            cut = cut_edges(final, cfg.cut_ratio)
            states.append(np.stack(traj.states))
            curvs.append(np.stack(traj.curvatures))
            present.append(traj.present)
            cut_present.append(cut.present)
    np.savez(out / "flow.npz", states=np.stack(states), curvatures=np.stack(curvs),
             present=np.stack(present), cut_present=np.stack(cut_present))
    (out / "flow.json").write_text(json.dumps({
        "nodes": graphs[0].node_names, "alpha": cfg.alpha, "iters": cfg.flow_iters,
        "idleness": cfg.idleness, "rho": cfg.cut_ratio, "degenerate_edges": degenerate}, indent=1))
    return {"subgraphs": len(graphs), "degenerate_edges": degenerate}


def load_flow(flow_dir) -> tuple[dict, dict]:
    d = Path(flow_dir)
    with np.load(d / "flow.npz") as f:
        arrays = {k: f[k] for k in f.files}
    return arrays, json.loads((d / "flow.json").read_text())


def stage_aggregate(cfg: PipelineConfig, flow_dir, reduced_dir, out_dir) -> dict:
    arrays, meta = load_flow(flow_dir)
    _, partition = load_reduced(reduced_dir)
    train = np.array([p == "train" for p in partition])
    if cfg.aggregation == OVER_SUBGRAPHS:
        comp = aggregate_matrices(arrays["states"][train, -1], arrays["cut_present"][train],
                                  OVER_SUBGRAPHS, meta["nodes"])
    else:
        # every post-update snapshot of every training subgraph, masked by its final cut
        snaps = arrays["states"][train, 1:]
        masks = np.broadcast_to(arrays["cut_present"][train][:, None], snaps.shape)
        comp = aggregate_matrices(snaps.reshape(-1, *snaps.shape[2:]), masks.reshape(-1, *snaps.shape[2:]),
                                  OVER_ITERATIONS, meta["nodes"])
    comp.meta = {"alpha": cfg.alpha, "rho": cfg.cut_ratio, "iters": cfg.flow_iters}
    comp.save(out_dir)
    return {"sources": comp.source_count, "mode": comp.mode}


def _gcn_inputs(reduced_dir):
    samples, partition = load_reduced(reduced_dir)
    x = eg.standardize_rows(np.stack([s.features for s in samples]))
    ids = np.array([s.event_id for s in samples])
    labels = np.array([s.label for s in samples])
    return x, ids, labels, np.array(partition)


def stage_train_gcn(cfg: PipelineConfig, reduced_dir, aggregate_dir, out_dir) -> dict:
    x, _, _, partition = _gcn_inputs(reduced_dir)
    comp = CompositeAdjacency.load(aggregate_dir)
    params, losses = eg.train_gcn(comp.matrix, x[partition == "train"], cfg.gcn)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    eg.save_gcn(params, out / "params.npz", cfg.gcn, losses)
    return {"initial_loss": losses[0], "final_loss": losses[-1]}


def stage_embed(cfg: PipelineConfig, reduced_dir, aggregate_dir, gcn_dir) -> dict:
    x, ids, labels, partition = _gcn_inputs(reduced_dir)
    comp = CompositeAdjacency.load(aggregate_dir)
    params, _ = eg.load_gcn(Path(gcn_dir) / "params.npz")
    a = eg.normalized_adjacency(comp.matrix) if cfg.gcn.normalize_adjacency else comp.matrix
    z = eg.embed(params, a, x)
    eg.write_embeddings_csv(Path(gcn_dir) / "embeddings.csv", ids, labels, z)
    np.save(Path(gcn_dir) / "partition.npy", partition.astype(str))
    return {"embeddings": len(z)}


def _load_embeddings(gcn_dir):
    ids, labels, z = eg.read_embeddings_csv(Path(gcn_dir) / "embeddings.csv")
    partition = np.load(Path(gcn_dir) / "partition.npy")
    return ids, binary_labels(labels), z, partition


def stage_train_clf(cfg: PipelineConfig, gcn_dir, out_dir) -> dict:
    _, y, z, partition = _load_embeddings(gcn_dir)
    tr = partition == "train"
    params, losses = ce.train_cnn(z[tr], y[tr], cfg.clf)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ce.save_cnn(params, out / "params.npz", cfg.clf, losses)
    return {"final_loss": losses[-1], "parameters": params.count()}


def stage_eval(cfg: PipelineConfig, gcn_dir, clf_dir, out_path) -> ce.MetricsReport:
    ids, y, z, partition = _load_embeddings(gcn_dir)
    params, _ = ce.load_cnn(Path(clf_dir) / "params.npz")
    te = partition == "test"
    scores = ce.cnn_forward(params, z[te])
    report = ce.evaluate_with_ci(scores, y[te], cfg.bootstrap_resamples, 0.95, cfg.bootstrap_seed)
    with open(Path(clf_dir) / "scores.csv", "w") as fh:
        fh.write("event_id,label,score\n")
        for e, lab, s in zip(ids[te], y[te], scores):
            fh.write(f"{int(e)},{int(lab)},{float(s)!r}\n")
    Path(out_path).write_text(json.dumps(report.to_dict(), indent=1))
    return report


def stage_diagnostics(flow_dir, out_dir) -> dict:
    arrays, meta = load_flow(flow_dir)
    return export_diagnostics(arrays["states"], arrays["curvatures"], arrays["present"], out_dir,
                              cut_present=arrays["cut_present"], node_names=meta["nodes"])


# -- driver -------------------------------------------------------------------


@dataclass
class RunReport:
    schema: str
    metrics: dict
    metrics_hash: str
    timings: dict
    artifacts: dict
    stages: dict
    diagnostics: dict
    config: dict

    def to_dict(self) -> dict:
        return asdict(self)


def run_pipeline(cfg: PipelineConfig, out_dir, resume: bool = False,
                 progress: Callable[[str], None] | None = None) -> RunReport:
    """Run every stage, skipping those whose artifacts exist when ``resume``."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1))
    p = {k: out / k for k in ("epochs", "reduced", "graphs", "flow", "aggregate", "gcn", "clf", "diagnostics")}
    metrics_path = out / "metrics.json"
    plan = [
        ("ingest", p["epochs"] / "manifest.json", lambda: stage_ingest(cfg, p["epochs"])),
        ("reduce", p["reduced"] / "manifest.json", lambda: stage_reduce(cfg, p["epochs"], p["reduced"])),
        ("graph", p["graphs"] / "subgraphs.jsonl", lambda: stage_graph(cfg, p["reduced"], p["graphs"])),
        ("flow", p["flow"] / "flow.json", lambda: stage_flow(cfg, p["graphs"], p["flow"])),
        ("aggregate", p["aggregate"] / "adjacency.json",
         lambda: stage_aggregate(cfg, p["flow"], p["reduced"], p["aggregate"])),
        ("train-gcn", p["gcn"] / "params.npz",
         lambda: stage_train_gcn(cfg, p["reduced"], p["aggregate"], p["gcn"])),
        ("embed", p["gcn"] / "partition.npy", lambda: stage_embed(cfg, p["reduced"], p["aggregate"], p["gcn"])),
        ("train-clf", p["clf"] / "params.npz", lambda: stage_train_clf(cfg, p["gcn"], p["clf"])),
        ("eval", metrics_path, lambda: stage_eval(cfg, p["gcn"], p["clf"], metrics_path).to_dict()),
        ("diagnostics", p["diagnostics"] / "summary.json", lambda: stage_diagnostics(p["flow"], p["diagnostics"])),
    ]
    timings, stages = {}, {}
    for name, marker, fn in plan:
        if resume and marker.exists():
            stages[name] = "resumed"
            continue
        if progress:
            progress(name)
        t0 = time.perf_counter()
        try:
            info = fn()
        except PipelineError as exc:
            raise StageError(name, exc) from exc
        except (ValueError, ArithmeticError, OSError) as exc:
            raise StageError(name, exc) from exc
        timings[name] = time.perf_counter() - t0
        stages[name] = info if name != "eval" else "done"
        log.info("stage %s done in %.1fs", name, timings[name])

    metrics = json.loads(metrics_path.read_text())
    report = RunReport(
        schema=REPORT_SCHEMA,
        metrics=metrics,
        metrics_hash=ce.MetricsReport(**metrics).digest(),
        timings=timings,
        artifacts={k: str(v) for k, v in p.items()} | {"metrics": str(metrics_path)},
        stages=stages,
        diagnostics=json.loads((p["diagnostics"] / "summary.json").read_text()),
        config=cfg.to_dict(),
    )
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=1))
    return report
