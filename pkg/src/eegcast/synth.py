"""Synthetic coupled multi-channel signals, burst events and EDF fixtures."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .edf import (
    MAIN_HEADER_BYTES,
    STANDARD_CHANNELS,
    SIGNAL_HEADER_BYTES,
    Channel,
    RecordingSession,
    _check_uniform,
)

PHYSICAL_RANGE = (-1000.0, 1000.0)
DIGITAL_RANGE = (-32767, 32767)
SPIKE_FREQUENCY = 20.0


def gen_coupled(C, N, rate, lag, noise_sd, seed, *, band=(4.0, 12.0), n_components=12, amplitude=50.0):
    """Lag-coupled channels driven by a band-limited sinusoid mixture.

    Channel 0 sums ``n_components`` sinusoids with frequencies drawn in
    ``band`` (Hz) and random phases. Channel k is channel k-1 delayed by
    ``lag`` samples plus fresh Gaussian noise of std ``noise_sd``.
    """
    if C < 1 or N < 1 or lag < 0:
        raise ValueError("need C >= 1, N >= 1, lag >= 0")
    lo, hi = band
    if not 0 < lo <= hi < rate / 2:
        raise ValueError("band must lie inside (0, rate/2)")
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(lo, hi, n_components)
    phases = rng.uniform(0, 2 * np.pi, n_components)
    weights = rng.uniform(0.5, 1.0, n_components)
    weights *= amplitude / np.sqrt(0.5 * np.sum(weights**2))

    extra = (C - 1) * lag
    t = (np.arange(N + extra) - extra) / rate
    base = (weights[:, None] * np.sin(2 * np.pi * freqs[:, None] * t + phases[:, None])).sum(axis=0)

    # ext[k][m] is channel k at time m - extra
    ext = [base]
    for _ in range(1, C):
        prev = ext[-1]
        cur = np.full_like(prev, np.nan)
        cur[lag:] = prev[: len(prev) - lag] if lag else prev
        cur += rng.normal(0.0, noise_sd, len(cur)) if noise_sd > 0 else 0.0
        ext.append(cur)
    return np.vstack([e[extra:] for e in ext])


def gen_events(matrix, burst_rate, burst_gain, seed, *, rate=256.0, duration=(8.0, 20.0),
               spike_amplitude=60.0):
    """Inject seizure-like bursts and return ``(matrix', [(start, end), ...])``.

    Event count is Poisson with mean ``burst_rate`` per minute of signal.
    Inside an event all channels are scaled by ``burst_gain`` and a 20 Hz
    rectified sinusoid of ``spike_amplitude`` is added. Intervals are
    half-open sample ranges, sorted and non-overlapping.
    """
    if burst_rate < 0:
        raise ValueError("burst_rate must be >= 0")
    x = np.array(matrix, dtype=np.float64, copy=True)
    n = x.shape[1]
    rng = np.random.default_rng(seed)
    minutes = n / rate / 60.0
    count = int(rng.poisson(burst_rate * minutes)) if burst_rate > 0 else 0
    raw = []
    for _ in range(count):
        length = int(round(rng.uniform(*duration) * rate))
        length = max(1, min(length, n))
        start = int(rng.integers(0, n - length + 1))
        raw.append((start, start + length))
    intervals = []
    for a, b in sorted(raw):
        if intervals and a <= intervals[-1][1]:
            intervals[-1] = (intervals[-1][0], max(b, intervals[-1][1]))
        else:
            intervals.append((a, b))
    for a, b in intervals:
        t = np.arange(b - a) / rate
        spikes = spike_amplitude * np.abs(np.sin(2 * np.pi * SPIKE_FREQUENCY * t))
        x[:, a:b] = x[:, a:b] * burst_gain + spikes
    return x, intervals


def make_session(matrix, rate, labels=None):
    matrix = np.asarray(matrix, dtype=np.float64)
    if labels is None:
        labels = STANDARD_CHANNELS if matrix.shape[0] == len(STANDARD_CHANNELS) else [f"CH{k}" for k in range(matrix.shape[0])]
    if len(labels) != matrix.shape[0]:
        raise ValueError("one label per channel required")
    return RecordingSession([Channel(lab, float(rate), row.copy()) for lab, row in zip(labels, matrix)])


def _num(value, width=8):
    """Format a number into at most ``width`` ASCII characters."""
    if float(value).is_integer():
        text = str(int(value))
    else:
        text = repr(float(value))
        precision = width
        while len(text) > width and precision > 0:
            text = f"{value:.{precision}g}"
            precision -= 1
    if len(text) > width:
        raise ValueError(f"{value!r} does not fit in {width} characters")
    return text


def _pad(text, width):
    raw = str(text).encode("ascii", errors="replace")[:width]
    return raw + b" " * (width - len(raw))


def _record_length(n, rate):
    """Samples per record: a divisor of ``n`` whose duration survives the
    8-character header field best (1 s records whenever possible)."""
    if float(rate).is_integer() and n % int(rate) == 0:
        return int(rate)
    divisors = {d for k in range(1, int(n**0.5) + 1) if n % k == 0 for d in (k, n // k)}

    def rate_error(spr):
        return abs(spr / float(_num(spr / rate)) - rate)

    return min(sorted(divisors, reverse=True), key=rate_error)


def encode_edf(session, patient="X X X X", recording="Startdate X X X X"):
    """Serialize ``session`` to EDF bytes with a +-1000 uV physical range."""
    if not session.channels:
        raise ValueError("cannot write an empty session")
    _check_uniform(session.channels)
    rate = session.channels[0].rate
    n = len(session.channels[0].samples)
    if n == 0:
        raise ValueError("cannot write channels without samples")
    pmin, pmax = PHYSICAL_RANGE
    dmin, dmax = DIGITAL_RANGE
    data = np.vstack([np.asarray(c.samples, dtype=np.float64) for c in session.channels])
    if data.min() < pmin or data.max() > pmax:
        raise ValueError(f"values outside the writable physical range {PHYSICAL_RANGE}")

    spr = _record_length(n, rate)
    num_records, duration = n // spr, spr / rate
    ns = len(session.channels)

    head = b"".join([
        _pad("0", 8), _pad(patient, 80), _pad(recording, 80),
        _pad("01.01.00", 8), _pad("00.00.00", 8),
        _pad(MAIN_HEADER_BYTES + SIGNAL_HEADER_BYTES * ns, 8), _pad("", 44),
        _pad(num_records, 8), _pad(_num(duration), 8), _pad(ns, 4),
    ])
    columns = [
        ([c.label for c in session.channels], 16),
        (["EEG electrode"] * ns, 80),
        (["uV"] * ns, 8),
        ([_num(pmin)] * ns, 8),
        ([_num(pmax)] * ns, 8),
        ([dmin] * ns, 8),
        ([dmax] * ns, 8),
        ([""] * ns, 80),
        ([spr] * ns, 8),
        ([""] * ns, 32),
    ]
    sig_head = b"".join(_pad(v, w) for values, w in columns for v in values)

    dig = np.rint((data - pmin) * (dmax - dmin) / (pmax - pmin) + dmin).astype("<i2")
    records = dig.reshape(ns, num_records, spr).transpose(1, 0, 2)
    return head + sig_head + records.tobytes()


def write_edf(session, path):
    """Write ``session`` as EDF to ``path``; returns the byte count."""
    blob = encode_edf(session)
    Path(path).write_bytes(blob)
    return len(blob)
