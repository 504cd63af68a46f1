"""Shared synthetic datasets for the test suite."""
import numpy as np

from eegcast.edf import window_signals
from eegcast.synth import gen_coupled, gen_events

RATE = 64.0
BAND = (10.0, 24.0)


def coupled(n, channels=16, seed=0, noise_sd=2.0, lag=8):
    return gen_coupled(channels, n, RATE, lag, noise_sd, seed, band=BAND)


def burst_recording(seconds, seed=0, channels=16, burst_rate=2.0):
    x = coupled(int(seconds * RATE), channels, seed)
    return gen_events(x, burst_rate, 2.0, seed + 1, rate=RATE)


def _clean(samples, intervals, window):
    """Drop windows that straddle a burst boundary (labelled 1 but mostly background)."""
    keep = []
    for k, s in enumerate(samples):
        a = k * window
        inside = any(lo <= a and a + window <= hi for lo, hi in intervals)
        if s.label == 0 or inside:
            keep.append(s)
    return keep


def _balanced(samples, n_per_class, rng):
    y = np.array([s.label for s in samples])
    pos = rng.permutation(np.flatnonzero(y == 1))
    neg = rng.permutation(np.flatnonzero(y == 0))
    if len(pos) < n_per_class or len(neg) < n_per_class:
        raise RuntimeError("recording too short for the requested class counts")
    idx = rng.permutation(np.concatenate([pos[:n_per_class], neg[:n_per_class]]))
    return np.stack([samples[i].data for i in idx]), y[idx]


def labelled_windows(n_train, n_test=0, window=32, seed=0, channels=16):
    """Balanced seizure/background windows from one synthetic recording.

    The first two thirds of the recording feed the training windows and the
    last third the held-out ones, so the two sets never share samples.
    Windows straddling a burst edge are left out so the classes separate.
    Returns ``(X_train, y_train)`` or, with ``n_test``, also ``(X_test, y_test)``.
    """
    seconds = max(900.0, 12 * (n_train + 2 * n_test) * window / RATE)
    x, intervals = burst_recording(seconds, seed, channels)
    cut = (2 * x.shape[1] // 3) // window * window
    rng = np.random.default_rng(seed)
    train = window_signals(x[:, :cut], window, window, intervals, patient_id="synth", rate=RATE)
    train = _clean(train, intervals, window)
    shifted = [(max(a - cut, 0), b - cut) for a, b in intervals if b > cut]
    test = window_signals(x[:, cut:], window, window, shifted, patient_id="synth", rate=RATE)
    test = _clean(test, shifted, window)
    out = _balanced(train, n_train, rng)
    if n_test:
        out = out + _balanced(test, n_test, rng)
    return out


def run_smoke(workdir, seed=7):
    """Run the full CLI pipeline on a small synthetic recording.

    Returns the dict of written CSV paths keyed by name.
    """
    from pathlib import Path

    from eegcast.cli import run

    w = Path(workdir)
    steps = [
        ["synth", "--out", w / "raw", "--seconds", "240", "--burst-rate", "3"],
        ["prepare", "--edf", w / "raw/synth.edf", "--annotations", w / "raw/synth_annotations.txt",
         "--out", w / "data", "--window-seconds", "2", "--test-fraction", "0.25"],
        ["train-diffusion", "--data", w / "data", "--out", w / "diff.ckpt", "--epochs", "2",
         "--max-images", "128", "--batch-size", "16"],
        ["train-classifier", "--data", w / "data", "--out", w / "clf.ckpt", "--epochs", "2"],
        ["forecast", "--model", w / "diff.ckpt", "--input", w / "raw/synth.edf", "--start-seconds", "200",
         "--horizon", "64", "--steps", "5", "--out", w / "forecast.csv"],
        ["warn", "--model", w / "diff.ckpt", "--classifier", w / "clf.ckpt", "--data", w / "data",
         "--steps", "5", "--out", w / "scores.csv"],
        ["eval", "--pred", w / "forecast.csv", "--scores", w / "scores.csv", "--out", w / "eval"],
        ["plot", "--csv", w / "forecast.csv", "--channels", "Fp1,Cz", "--out", w / "plots"],
    ]
    for argv in steps:
        argv = [str(a) for a in argv] + ["--seed", str(seed)]
        code = run(argv)
        if code != 0:
            raise RuntimeError(f"eegcast {argv[0]} exited with {code}")
    return {p.relative_to(w).as_posix(): p for p in sorted(w.rglob("*.csv"))}
