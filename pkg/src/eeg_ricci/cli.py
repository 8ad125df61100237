"""Command-line entry point: one subcommand per pipeline stage plus ``run``.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .errors import ConfigError, PipelineError
from .signal_io import mix_at_snr, save_epochs, synth_dataset


def _config(args) -> pl.PipelineConfig:
    cfg = pl.PipelineConfig.load(args.config) if getattr(args, "config", None) else pl.PipelineConfig()
    if getattr(args, "seed", None) is not None:
        s = args.seed
        cfg = replace(cfg, synth_seed=s, split_seed=s, bootstrap_seed=s,
                      gcn=replace(cfg.gcn, seed=s), clf=replace(cfg.clf, seed=s))
    overrides = {
        "alpha": "alpha", "iters": "flow_iters", "idleness": "idleness", "cut": "cut_ratio",
        "mode": "aggregation", "denoiser": "denoiser", "count": "synth_count",
    }
    for arg, key in overrides.items():
        val = getattr(args, arg, None)
        if val is not None:
            cfg = replace(cfg, **{key: val})
    if getattr(args, "band", None):
        cfg = replace(cfg, band=tuple(args.band))
    if getattr(args, "alias", None):
        aliases = dict(cfg.channel_aliases)
        for item in args.alias:
            src, _, dst = item.partition("=")
            if not dst:
                raise ConfigError(f"alias must look like SRC=DST, got {item!r}")
            aliases[src] = dst
        cfg = replace(cfg, channel_aliases=aliases)
    return cfg.validate()


def _print(obj) -> None:
    print(json.dumps(obj, indent=1, default=str))


def cmd_ingest(args):
    cfg = replace(_config(args), source=args.records)
    _print(pl.stage_ingest(cfg, args.out))


def cmd_synth(args):
    cfg = _config(args)
    epochs = synth_dataset(cfg.synth_count, cfg.synth_seed, cfg.n, cfg.channels)
    save_epochs(epochs, args.out, {"source": "synthetic", "dropped_events": 0})
    _print({"epochs": len(epochs)})


def _read_vector(path) -> np.ndarray:
    text = Path(path).read_text().replace(",", " ")
    return np.array(text.split(), dtype=float)


def cmd_mix(args):
    mixed, lam = mix_at_snr(_read_vector(args.clean), _read_vector(args.noise), args.snr_db)
    np.savetxt(args.out, mixed[None], delimiter=",", fmt="%.17g")
    _print({"lambda": lam, "snr_db": args.snr_db, "out": args.out})


def cmd_reduce(args):
    _print(pl.stage_reduce(_config(args), args.epochs, args.out))


def cmd_graph(args):
    _print(pl.stage_graph(_config(args), args.reduced, args.out))


def cmd_flow(args):
    _print(pl.stage_flow(_config(args), args.graphs, args.out))


def cmd_aggregate(args):
    _print(pl.stage_aggregate(_config(args), args.flow, args.reduced, args.out))


def cmd_train_gcn(args):
    _print(pl.stage_train_gcn(_config(args), args.reduced, args.adjacency, args.out))


def cmd_embed(args):
    _print(pl.stage_embed(_config(args), args.reduced, args.adjacency, args.gcn))


def cmd_train_clf(args):
    _print(pl.stage_train_clf(_config(args), args.gcn, args.out))


def cmd_eval(args):
    _print(pl.stage_eval(_config(args), args.gcn, args.clf, args.out).to_dict())


def cmd_run(args):
    report = pl.run_pipeline(_config(args), args.out, resume=args.resume,
                             progress=lambda s: print(f"[stage] {s}", file=sys.stderr))
    _print({"metrics": report.metrics, "metrics_hash": report.metrics_hash, "timings": report.timings})


def cmd_diagnostics(args):
    _print(pl.stage_diagnostics(args.flow, args.out))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eeg-ricci", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, *paths, out=True):
        p = sub.add_parser(name)
        p.set_defaults(fn=fn)
        p.add_argument("--config", help="JSON pipeline config")
        p.add_argument("--seed", type=int)
        for path in paths:
            p.add_argument(f"--{path}", required=True)
        if out:
            p.add_argument("--out", required=True)
        return p

    add("ingest", cmd_ingest, "records").add_argument("--alias", action="append", help="SRC=DST channel alias")
    add("synth", cmd_synth).add_argument("--count", type=int)
    p = add("mix", cmd_mix, "clean", "noise")
    p.add_argument("--snr-db", type=float, required=True)
    p = add("reduce", cmd_reduce, "epochs")
    p.add_argument("--denoiser", choices=["identity", "bandpass"])
    p.add_argument("--band", type=float, nargs=2, metavar=("LO", "HI"))
    add("graph", cmd_graph, "reduced")
    p = add("flow", cmd_flow, "graphs")
    p.add_argument("--alpha", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--idleness", type=float)
    p.add_argument("--cut", type=float)
    p = add("aggregate", cmd_aggregate, "flow", "reduced")
    p.add_argument("--mode", choices=["over-subgraphs", "over-iterations"])
    add("train-gcn", cmd_train_gcn, "reduced", "adjacency")
    add("embed", cmd_embed, "reduced", "adjacency", "gcn", out=False)
    add("train-clf", cmd_train_clf, "gcn")
    add("eval", cmd_eval, "gcn", "clf")
    p = add("run", cmd_run)
    p.add_argument("--resume", action="store_true")
    add("diagnostics", cmd_diagnostics, "flow")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.fn(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
