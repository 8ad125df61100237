"""Record ingestion, synthetic two-class epochs, and SNR-controlled mixing.

Input records are tab-separated lines::

    id <TAB> event <TAB> device <TAB> channel <TAB> code <TAB> size <TAB> v0,v1,...

``code`` is the stimulus digit (0-9) or -1 for a non-digit stimulus.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DataError,
    FieldCountError,
    NumericParseError,
    SampleCountMismatch,
    ZeroSignalError,
)

DEFAULT_CHANNELS = ("FP1", "FP2", "TP9", "TP10")
DEFAULT_N = 512
NOMINAL_FS = 256.0
NON_DIGIT = -1

SYNTH_DOMINANT_HZ = {"A": 10.0, "B": 22.0}
# Class A plays the "digit" role, class B the "non-digit" role.
SYNTH_LABEL = {"A": 0, "B": NON_DIGIT}

EPOCH_STORE_SCHEMA = "eeg-ricci/epochs/1"


@dataclass(frozen=True)
class SignalRecord:
    record_id: int
    event_id: int
    device: str
    channel: str
    label_code: int
    sample_count: int
    samples: tuple[float, ...]


@dataclass
class MultiChannelEpoch:
    """One fixed-length window over all configured channels."""

    event_id: int
    channels: "OrderedDict[str, np.ndarray]"
    label: int
    duration_s: float = 2.0
    provenance: str = ""

    def __post_init__(self):
        lengths = {len(v) for v in self.channels.values()}
        if len(lengths) > 1:
            raise DataError(f"event {self.event_id}: channel lengths differ {sorted(lengths)}")

    @property
    def n_samples(self) -> int:
        return len(next(iter(self.channels.values())))

    @property
    def is_digit(self) -> bool:
        return self.label != NON_DIGIT

    @property
    def fs(self) -> float:
        return self.n_samples / self.duration_s

    def matrix(self) -> np.ndarray:
        """Channels stacked as rows, in stored order."""
        return np.stack([self.channels[c] for c in self.channels])


def _parse_int(text, line_no, name):
    try:
        return int(text.strip())
    except ValueError:
        raise NumericParseError(line_no, f"field {name!r} is not an integer: {text!r}") from None


def parse_record_line(line: str, line_no: int = 1, aliases: Mapping[str, str] | None = None) -> SignalRecord:
    """Parse one tab-separated record line.

    A declared size that disagrees with the parsed sample count triggers a
    :class:`SampleCountMismatch` warning and is replaced by the true count.
    """
    fields = line.rstrip("\r\n").split("\t")
    if len(fields) < 7:
        raise FieldCountError(line_no, len(fields))
    # extra tabs inside the sample field are tolerated
    head, sample_text = fields[:6], "\t".join(fields[6:])
    record_id = _parse_int(head[0], line_no, "id")
    event_id = _parse_int(head[1], line_no, "event")
    device = head[2].strip()
    channel = head[3].strip()
    if aliases:
        channel = aliases.get(channel, channel)
    code = _parse_int(head[4], line_no, "code")
    declared = _parse_int(head[5], line_no, "size")

    samples = []
    for tok in sample_text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            v = float(tok)
        except ValueError:
            raise NumericParseError(line_no, f"bad sample value {tok!r}") from None
        if not math.isfinite(v):
            raise NumericParseError(line_no, f"non-finite sample value {tok!r}")
        samples.append(v)
    if not samples:
        raise NumericParseError(line_no, "no samples")
    if declared != len(samples):
        warnings.warn(
            f"line {line_no}: declared size {declared} but parsed {len(samples)} samples",
            SampleCountMismatch,
            stacklevel=2,
        )
    return SignalRecord(record_id, event_id, device, channel, code, len(samples), tuple(samples))


def format_record_line(rec: SignalRecord) -> str:
    values = ",".join(repr(float(v)) for v in rec.samples)
    return "\t".join(
        [str(rec.record_id), str(rec.event_id), rec.device, rec.channel,
         str(rec.label_code), str(rec.sample_count), values]
    )


def read_records(path, aliases: Mapping[str, str] | None = None) -> Iterator[SignalRecord]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if line.strip():
                yield parse_record_line(line, line_no, aliases)


def resample_linear(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if n <= 0:
        raise ValueError("resampling target must be positive")
    if len(x) == n:
        return x.copy()
    if len(x) == 1:
        return np.full(n, x[0])
    src = np.linspace(0.0, 1.0, len(x))
    dst = np.linspace(0.0, 1.0, n)
    return np.interp(dst, src, x)


def assemble_epochs(
    records: Iterable[SignalRecord],
    n: int = DEFAULT_N,
    channels: Sequence[str] = DEFAULT_CHANNELS,
    duration_s: float = 2.0,
) -> tuple[list[MultiChannelEpoch], int]:
    """Group records by event into epochs.

    Returns ``(epochs, n_dropped)``; epochs are sorted by event id and events
    lacking any configured channel are dropped.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    wanted = set(channels)
    by_event: dict[int, dict[str, SignalRecord]] = {}
    for rec in records:
        if rec.channel not in wanted:
            continue
        by_event.setdefault(rec.event_id, {}).setdefault(rec.channel, rec)

    epochs, dropped = [], 0
    for event_id in sorted(by_event):
        recs = by_event[event_id]
        if len(recs) != len(wanted):
            dropped += 1
            continue
        first = recs[channels[0]]
        data = OrderedDict((c, resample_linear(recs[c].samples, n)) for c in channels)
        label = NON_DIGIT if first.label_code == NON_DIGIT else first.label_code
        epochs.append(
            MultiChannelEpoch(event_id, data, label, duration_s, provenance=f"device:{first.device}")
        )
    return epochs, dropped


def _pink_noise(rng, n):
    """Zero-mean noise with 1/f power spectrum, unit RMS."""
    spec = rng.standard_normal(n // 2 + 1) + 1j * rng.standard_normal(n // 2 + 1)
    f = np.arange(n // 2 + 1, dtype=float)
    spec[0] = 0.0
    spec[1:] /= np.sqrt(f[1:])
    x = np.fft.irfft(spec, n)
    return x / np.sqrt(np.mean(x**2))


def synth_epoch(
    class_id: str,
    seed: int,
    n: int = DEFAULT_N,
    channels: Sequence[str] = DEFAULT_CHANNELS,
    noise_rms: float = 0.3,
    event_id: int | None = None,
) -> MultiChannelEpoch:
    """Synthetic epoch: narrow-band oscillation plus 1/f noise.

    Class ``"A"`` oscillates at 10 Hz, class ``"B"`` at 22 Hz, both at the
    nominal 256 Hz sampling rate. Each channel draws its own phase, a slow
    amplitude modulation and its own noise realisation from ``seed``.
    """
    if class_id not in SYNTH_DOMINANT_HZ:
        raise ValueError(f"unknown synthetic class {class_id!r}")
    rng = np.random.default_rng([seed, n, ord(class_id)])
    t = np.arange(n) / NOMINAL_FS
    f0 = SYNTH_DOMINANT_HZ[class_id]
    data = OrderedDict()
    for c in channels:
        phase, mod_phase = rng.uniform(0, 2 * np.pi, size=2)
        amp = rng.uniform(0.8, 1.2)
        envelope = 1.0 + 0.1 * np.sin(2 * np.pi * 0.5 * t + mod_phase)
        x = amp * envelope * np.sin(2 * np.pi * f0 * t + phase)
        data[c] = x + noise_rms * _pink_noise(rng, n)
    return MultiChannelEpoch(
        seed if event_id is None else event_id,
        data,
        SYNTH_LABEL[class_id],
        duration_s=n / NOMINAL_FS,
        provenance=f"synth:{class_id}:{seed}",
    )


def synth_dataset(count: int, seed: int = 0, n: int = DEFAULT_N,
                  channels: Sequence[str] = DEFAULT_CHANNELS) -> list[MultiChannelEpoch]:
    """Balanced synthetic set; even event ids are class A, odd are class B."""
    return [
        synth_epoch("A" if i % 2 == 0 else "B", seed * 1_000_003 + i, n, channels, event_id=i)
        for i in range(count)
    ]


def rms(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x * x)))


def mix_at_snr(clean, noise, snr_db: float) -> tuple[np.ndarray, float]:
    """Return ``(clean + lam * noise, lam)`` with the amplitude SNR set to ``snr_db``."""
    clean = np.asarray(clean, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if clean.shape != noise.shape:
        raise DataError("clean and noise must have equal length")
    r_clean, r_noise = rms(clean), rms(noise)
    if r_clean == 0 or r_noise == 0:
        raise ZeroSignalError("RMS of clean and noise must be nonzero")
    lam = r_clean / (r_noise * 10.0 ** (snr_db / 20.0))
    return clean + lam * noise, lam


def measure_snr(clean, scaled_noise) -> float:
    clean = np.asarray(clean, dtype=float)
    scaled_noise = np.asarray(scaled_noise, dtype=float)
    if clean.shape != scaled_noise.shape:
        raise DataError("inputs must have equal length")
    r_clean, r_noise = rms(clean), rms(scaled_noise)
    if r_clean == 0 or r_noise == 0:
        raise ZeroSignalError("RMS values must be nonzero")
    return 20.0 * math.log10(r_clean / r_noise)


# -- epoch store --------------------------------------------------------------


def save_epochs(epochs: Sequence[MultiChannelEpoch], out_dir, extra: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not epochs:
        raise DataError("no epochs to save")
    channels = list(epochs[0].channels)
    data = np.stack([e.matrix() for e in epochs])
    np.save(out / "epochs.npy", data)
    manifest = {
        "schema": EPOCH_STORE_SCHEMA,
        "channels": channels,
        "n": int(data.shape[2]),
        "duration_s": float(epochs[0].duration_s),
        "data": "epochs.npy",
        "events": [
            {"event_id": int(e.event_id), "label": int(e.label), "provenance": e.provenance}
            for e in epochs
        ],
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return out


def load_epochs(store_dir) -> list[MultiChannelEpoch]:
    store = Path(store_dir)
    manifest = json.loads((store / "manifest.json").read_text())
    if manifest.get("schema") != EPOCH_STORE_SCHEMA:
        raise DataError(f"{store}: not an epoch store")
    data = np.load(store / manifest["data"])
    channels = manifest["channels"]
    return [
        MultiChannelEpoch(
            ev["event_id"],
            OrderedDict((c, data[i, k]) for k, c in enumerate(channels)),
            ev["label"],
            manifest["duration_s"],
            ev.get("provenance", ""),
        )
        for i, ev in enumerate(manifest["events"])
    ]
