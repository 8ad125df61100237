"""Flow diagnostics: edge-weight histograms, cut frequencies, curvature stats."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .ricci_flow import HIST_BINS, FlowTrajectory


def _dip(values) -> dict:
    import diptest

    values = np.asarray(values, dtype=float)
    if len(values) < 4 or np.ptp(values) == 0:
        return {"dip": None, "pvalue": None, "bimodal": None}
    dip, pval = diptest.diptest(values)
    return {"dip": float(dip), "pvalue": float(pval), "bimodal": bool(pval < 0.05)}


def _svg(hists: list[tuple[np.ndarray, np.ndarray]], title: str) -> str:
    width, panel_h, pad = 640, 56, 18
    height = pad + len(hists) * (panel_h + pad)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="10">',
             f'<text x="4" y="12">{title}</text>']
    for row, (counts, edges) in enumerate(hists):
        top = pad + row * (panel_h + pad)
        peak = max(int(counts.max()), 1)
        bar_w = (width - 80) / len(counts)
        parts.append(f'<text x="4" y="{top + panel_h / 2:.0f}">t={row + 1}</text>')
        for k, c in enumerate(counts):
            h = panel_h * c / peak
            parts.append(f'<rect x="{60 + k * bar_w:.1f}" y="{top + panel_h - h:.1f}" '
                         f'width="{bar_w - 1:.1f}" height="{h:.1f}" fill="#4a6fa5"/>')
        parts.append(f'<text x="60" y="{top + panel_h + 11:.0f}">{edges[0]:.2f}</text>')
        parts.append(f'<text x="{width - 50}" y="{top + panel_h + 11:.0f}">{edges[-1]:.2f}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def export_diagnostics(states, curvatures, present, out_dir, cut_present=None,
                       node_names: Sequence[str] | None = None, bins: int = HIST_BINS) -> dict:
    """Write histogram CSV/SVG, cut-frequency table and curvature summary.

    ``states`` is ``(k, T + 1, n, n)``, ``curvatures`` ``(k, T, n, n)`` and
    ``present`` ``(k, n, n)`` over ``k`` trajectories. Histograms bin
    ``log10`` of present edge weights after each of the ``T`` updates.
    """
    states = np.asarray(states, dtype=float)
    curvatures = np.asarray(curvatures, dtype=float)
    present = np.asarray(present, dtype=bool)
    if states.ndim != 4 or len(states) == 0:
        raise DataError("need at least one trajectory of shape (T + 1, n, n)")
    k, t1, n, _ = states.shape
    names = list(node_names) if node_names else [str(i) for i in range(n)]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    upper = np.triu(np.ones((n, n), dtype=bool), 1)
    mask = present & upper  # (k, n, n)

    hists, dips = [], []
    with open(out / "weight_histograms.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "bin", "log10_weight_lo", "log10_weight_hi", "count"])
        for t in range(1, t1):
            vals = np.log10(states[:, t][mask])
            counts, edges = np.histogram(vals, bins=bins)
            hists.append((counts, edges))
            dips.append({"iteration": t, **_dip(vals)})
            for b in range(bins):
                w.writerow([t, b, repr(float(edges[b])), repr(float(edges[b + 1])), int(counts[b])])
    (out / "weight_histograms.svg").write_text(_svg(hists, "log10 edge weight per flow iteration"))

    with open(out / "curvature_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "min", "median", "max"])
        for t in range(curvatures.shape[1]):
            vals = curvatures[:, t][mask]
            w.writerow([t, repr(float(vals.min())), repr(float(np.median(vals))), repr(float(vals.max()))])

    cut_table = None
    if cut_present is not None:
        cut = mask & ~np.asarray(cut_present, dtype=bool)
        denom = mask.sum(axis=0)
        frac = np.divide(cut.sum(axis=0), denom, out=np.zeros((n, n)), where=denom > 0)
        cut_table = []
        with open(out / "cut_frequency.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_i", "node_j", "cut_fraction"])
            for i, j in zip(*np.nonzero(upper)):
                w.writerow([names[i], names[j], repr(float(frac[i, j]))])
                cut_table.append([names[i], names[j], float(frac[i, j])])

    summary = {
        "trajectories": int(k),
        "iterations": int(t1 - 1),
        "bins": bins,
        "edges_per_iteration": int(mask.sum()),
        "bimodality": dips,
        "files": sorted(p.name for p in out.iterdir()),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    return summary


def export_trajectories(trajectories: Sequence[FlowTrajectory], out_dir, cut_present=None,
                        node_names=None) -> dict:
    """Convenience wrapper over a list of :class:`FlowTrajectory`."""
    return export_diagnostics(
        np.stack([np.stack(t.states) for t in trajectories]),
        np.stack([np.stack(t.curvatures) for t in trajectories]),
        np.stack([t.present for t in trajectories]),
        out_dir, cut_present, node_names,
    )
