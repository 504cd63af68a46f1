"""EDF reading, channel selection and labeled windowing."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

STANDARD_CHANNELS = (
    "Fp1", "F3", "C3", "P3", "O1", "F7", "T3", "T5",
    "FC1", "FC5", "CP1", "CP5", "F9", "Fz", "Cz", "Pz",
)

MAIN_HEADER_BYTES = 256
SIGNAL_HEADER_BYTES = 256

# (name, width) of the per-signal header fields, stored field-major on disk
_SIGNAL_FIELDS = (
    ("label", 16),
    ("transducer", 80),
    ("physical_dimension", 8),
    ("physical_min", 8),
    ("physical_max", 8),
    ("digital_min", 8),
    ("digital_max", 8),
    ("prefilter", 80),
    ("samples_per_record", 8),
    ("reserved", 32),
)


class EdfError(ValueError):
    """Malformed EDF content. ``offset`` is the byte position at fault."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass
class SignalHeader:
    label: str
    physical_min: float
    physical_max: float
    digital_min: int
    digital_max: int
    samples_per_record: int
    transducer: str = ""
    physical_dimension: str = "uV"
    prefilter: str = ""

    @property
    def gain(self):
        return (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min)


@dataclass
class EdfHeader:
    version: str
    patient_info: str
    recording_info: str
    start_datetime: str
    num_records: int
    record_duration: float
    signals: list[SignalHeader]

    @property
    def num_signals(self):
        return len(self.signals)

    @property
    def header_bytes(self):
        return MAIN_HEADER_BYTES + SIGNAL_HEADER_BYTES * self.num_signals


@dataclass
class Channel:
    label: str
    rate: float
    samples: np.ndarray


@dataclass
class RecordingSession:
    channels: list[Channel]
    header: EdfHeader | None = None

    @property
    def labels(self):
        return [c.label for c in self.channels]

    def matrix(self):
        """Stack all channels into a C x N matrix (rates and lengths must agree)."""
        _check_uniform(self.channels)
        return np.vstack([c.samples for c in self.channels])

    @property
    def rate(self):
        _check_uniform(self.channels)
        return self.channels[0].rate


@dataclass
class WindowedSample:
    data: np.ndarray
    label: int
    patient_id: str = ""
    start_time: float = 0.0
    meta: dict = field(default_factory=dict)


def _check_uniform(channels):
    if not channels:
        raise ValueError("no channels")
    rates = {c.rate for c in channels}
    if len(rates) > 1:
        raise ValueError(f"channels have different sampling rates: {sorted(rates)}")
    lengths = {len(c.samples) for c in channels}
    if len(lengths) > 1:
        raise ValueError(f"channels have different lengths: {sorted(lengths)}")


def _field(raw, start, width, kind=str):
    text = raw[start : start + width].decode("ascii", errors="replace").strip()
    if kind is str:
        return text
    try:
        return kind(float(text)) if kind is int else kind(text)
    except ValueError:
        raise EdfError(f"cannot read {kind.__name__} from {text!r}", start) from None


def parse_header(data):
    """Parse the main and per-signal headers from the start of ``data``."""
    if len(data) < MAIN_HEADER_BYTES:
        raise EdfError(f"truncated main header: {len(data)} < {MAIN_HEADER_BYTES} bytes", len(data))
    version = _field(data, 0, 8)
    patient = _field(data, 8, 80)
    recording = _field(data, 88, 80)
    start = f"{_field(data, 168, 8)} {_field(data, 176, 8)}"
    declared_bytes = _field(data, 184, 8, int)
    num_records = _field(data, 236, 8, int)
    duration = _field(data, 244, 8, float)
    ns = _field(data, 252, 4, int)
    if ns <= 0:
        raise EdfError(f"header declares {ns} signals", 252)
    expected = MAIN_HEADER_BYTES + SIGNAL_HEADER_BYTES * ns
    if declared_bytes != expected:
        raise EdfError(f"header size field {declared_bytes} != {expected}", 184)
    if len(data) < expected:
        raise EdfError(f"truncated signal headers: need {expected} bytes", len(data))

    values = {}
    pos = MAIN_HEADER_BYTES
    for name, width in _SIGNAL_FIELDS:
        kind = {"physical_min": float, "physical_max": float, "digital_min": int,
                "digital_max": int, "samples_per_record": int}.get(name, str)
        values[name] = [_field(data, pos + k * width, width, kind) for k in range(ns)]
        pos += width * ns

    signals = []
    for k in range(ns):
        sig = SignalHeader(
            label=values["label"][k],
            physical_min=values["physical_min"][k],
            physical_max=values["physical_max"][k],
            digital_min=values["digital_min"][k],
            digital_max=values["digital_max"][k],
            samples_per_record=values["samples_per_record"][k],
            transducer=values["transducer"][k],
            physical_dimension=values["physical_dimension"][k],
            prefilter=values["prefilter"][k],
        )
        if sig.digital_max <= sig.digital_min:
            raise EdfError(f"signal {sig.label!r}: digital_max <= digital_min, cannot calibrate")
        if sig.samples_per_record < 1:
            raise EdfError(f"signal {sig.label!r}: samples_per_record < 1")
        signals.append(sig)
    return EdfHeader(version, patient, recording, start, num_records, duration, signals)


def parse_edf(data):
    """Decode an EDF byte string into a calibrated :class:`RecordingSession`.

    Samples are 16-bit little-endian two's complement, converted with
    ``phys = (dig - dig_min) * (phys_max - phys_min) / (dig_max - dig_min) + phys_min``.
    """
    data = bytes(data)
    header = parse_header(data)
    spr = np.array([s.samples_per_record for s in header.signals])
    record_bytes = int(spr.sum()) * 2
    body = len(data) - header.header_bytes
    num_records = header.num_records
    if num_records < 0:
        num_records = body // record_bytes
    needed = num_records * record_bytes
    if body < needed:
        full = body // record_bytes
        raise EdfError(
            f"truncated data: {num_records} records declared, {full} complete",
            header.header_bytes + full * record_bytes,
        )
    raw = np.frombuffer(data, dtype="<i2", count=needed // 2, offset=header.header_bytes)
    raw = raw.reshape(num_records, -1)
    bounds = np.r_[0, np.cumsum(spr)]
    channels = []
    for k, sig in enumerate(header.signals):
        dig = raw[:, bounds[k] : bounds[k + 1]].reshape(-1).astype(np.float64)
        phys = (dig - sig.digital_min) * sig.gain + sig.physical_min
        rate = sig.samples_per_record / header.record_duration if header.record_duration > 0 else float(sig.samples_per_record)
        channels.append(Channel(sig.label, float(rate), phys))
    header.num_records = num_records
    return RecordingSession(channels, header)


def read_edf(path):
    return parse_edf(Path(path).read_bytes())


def normalize_label(label):
    """Case-fold, trim, and drop a leading ``EEG`` token."""
    text = label.strip().casefold()
    text = re.sub(r"^eeg[\s_-]+", "", text)
    return text.strip()


def select_channels(session, wanted=STANDARD_CHANNELS):
    """Return a C x N matrix with rows in the order of ``wanted``."""
    index = {}
    for pos, ch in enumerate(session.channels):
        index.setdefault(normalize_label(ch.label), []).append(pos)
    picked = []
    for name in wanted:
        hits = index.get(normalize_label(name), [])
        if not hits:
            raise KeyError(f"channel {name!r} not found in recording (have {session.labels})")
        if len(hits) > 1:
            labels = [session.channels[i].label for i in hits]
            raise KeyError(f"channel {name!r} is ambiguous: matches {labels}")
        picked.append(session.channels[hits[0]])
    _check_uniform(picked)
    return np.vstack([c.samples for c in picked]), picked[0].rate


def read_annotations(path):
    """Parse a sidecar of ``start_s end_s`` lines into (start, end) second pairs."""
    intervals = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'start_s end_s'")
        start, end = float(parts[0]), float(parts[1])
        if end < start:
            raise ValueError(f"{path}:{lineno}: end before start")
        intervals.append((start, end))
    return intervals


def write_annotations(path, intervals):
    lines = [f"{a!r} {b!r}" for a, b in intervals]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def seconds_to_samples(intervals, rate):
    return [(int(round(a * rate)), int(round(b * rate))) for a, b in intervals]


def window_signals(matrix, window, stride, seizure_intervals=(), *, patient_id="", rate=None):
    """Cut ``window``-sample windows every ``stride`` samples.

    A window is labeled 1 when it overlaps any half-open ``[start, end)``
    sample interval in ``seizure_intervals``.
    """
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be >= 1")
    matrix = np.asarray(matrix, dtype=np.float64)
    n = matrix.shape[1]
    out = []
    for start in range(0, n - window + 1, stride):
        stop = start + window
        label = int(any(a < b and start < b and a < stop for a, b in seizure_intervals))
        out.append(
            WindowedSample(
                data=matrix[:, start:stop].copy(),
                label=label,
                patient_id=patient_id,
                start_time=start / rate if rate else float(start),
            )
        )
    return out
