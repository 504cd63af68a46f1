"""Command line entry point: ``eegcast <subcommand> [options]``.

Subcommands: synth, prepare, train-diffusion, train-classifier, forecast,
warn, eval, plot. Options can also come from a flat ``key = value`` config
file passed with ``--config``; command-line flags take precedence.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import diffusion
from .edf import STANDARD_CHANNELS, read_annotations, read_edf, select_channels, seconds_to_samples, window_signals
from .edf import write_annotations
from .imaging import decimate, fit_scaler, tile_images
from .metrics import (
    classification_report,
    delong_test,
    format_value,
    paired_t_test,
    roc_auc,
    summarize,
    write_metrics_csv,
)

logger = logging.getLogger("eegcast")

DATASET_FORMAT = "eegcast-dataset"
DATASET_VERSION = 1


class CLIError(Exception):
    pass


def _default_seed():
    raw = os.environ.get("EEGDIF_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CLIError(f"EEGDIF_SEED must be an integer, got {raw!r}") from None


def _floats(text):
    return tuple(float(v) for v in text.split(","))


def _labels(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CLIError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _emit(path):
    print(f"wrote {path}")


# ---------------------------------------------------------------- synth


def cmd_synth(args):
    from .synth import gen_coupled, gen_events, make_session, write_edf

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = int(round(args.seconds * args.rate))
    x = gen_coupled(args.channels, n, args.rate, args.lag, args.noise_sd, args.seed, band=args.band)
    x, intervals = gen_events(x, args.burst_rate, args.burst_gain, args.seed + 1, rate=args.rate,
                              duration=args.burst_seconds, spike_amplitude=args.spike_amplitude)
    labels = list(STANDARD_CHANNELS) if args.channels == len(STANDARD_CHANNELS) else [f"CH{k}" for k in range(args.channels)]
    edf_path = out / "synth.edf"
    write_edf(make_session(x, args.rate, labels), edf_path)
    _emit(edf_path)
    ann_path = out / "synth_annotations.txt"
    write_annotations(ann_path, [(a / args.rate, b / args.rate) for a, b in intervals])
    _emit(ann_path)


# ---------------------------------------------------------------- data loading


def _load_signals(args, wanted=None):
    """Return (matrix C x N, rate, labels) from an EDF or .npy input."""
    path = Path(args.input)
    if not path.exists():
        raise CLIError(f"input file not found: {path}")
    if path.suffix.lower() == ".npy":
        matrix = np.load(path)
        if args.rate is None:
            raise CLIError("--rate is required for .npy input")
        labels = wanted or [f"CH{k}" for k in range(matrix.shape[0])]
        return np.asarray(matrix, dtype=np.float64), float(args.rate), list(labels)
    session = read_edf(path)
    names = wanted if wanted is not None else session.labels
    matrix, rate = select_channels(session, names)
    if args.rate is not None:
        rate = float(args.rate)
    return matrix, rate, list(names)


def load_dataset(directory, split=None):
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise CLIError(f"no dataset manifest in {directory}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != DATASET_FORMAT or manifest.get("version") != DATASET_VERSION:
        raise CLIError(f"{manifest_path}: unsupported dataset format")
    entries = [w for w in manifest["windows"] if split is None or w["split"] == split]
    if not entries:
        raise CLIError(f"dataset {directory} has no windows for split {split!r}")
    X = np.stack([np.load(directory / w["file"]) for w in entries])
    y = np.array([w["label"] for w in entries], dtype=np.int64)
    return manifest, entries, X, y


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def cmd_prepare(args):
    session = read_edf(args.edf)
    wanted = _labels(args.channels) if args.channels else list(STANDARD_CHANNELS)
    matrix, rate = select_channels(session, wanted)
    matrix = decimate(matrix, args.decimate)
    rate = rate / args.decimate
    intervals = read_annotations(args.annotations) if args.annotations else []
    window = int(round(args.window_seconds * rate))
    stride = int(round((args.stride_seconds or args.window_seconds) * rate))
    samples = window_signals(matrix, window, stride, seconds_to_samples(intervals, rate),
                             patient_id=args.patient_id, rate=rate)
    if not samples:
        raise CLIError("recording is shorter than one window")
    out = Path(args.out)
    (out / "windows").mkdir(parents=True, exist_ok=True)
    n_test = int(round(args.test_fraction * len(samples)))
    entries = []
    for k, s in enumerate(samples):
        name = f"windows/w{k:05d}.npy"
        np.save(out / name, s.data)
        entries.append({
            "file": name,
            "label": s.label,
            "start_time": s.start_time,
            "patient_id": s.patient_id,
            "split": "test" if k >= len(samples) - n_test else "train",
            "scaler": fit_scaler(s.data).to_dict(),
        })
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "channels": wanted,
        "rate": rate,
        "window_samples": window,
        "stride_samples": stride,
        "windows": entries,
        "provenance": {
            "edf": str(args.edf),
            "edf_sha256": _sha256(args.edf),
            "annotations": str(args.annotations) if args.annotations else None,
            "decimate": args.decimate,
        },
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")
    _emit(path)
    print(f"{len(entries)} windows ({sum(e['label'] for e in entries)} positive), "
          f"{window} samples each at {rate:g} Hz")


# ---------------------------------------------------------------- training


def _write_curve(path, curve):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for k, v in enumerate(curve):
            w.writerow([k, format_value(v)])
    _emit(path)


def cmd_train_diffusion(args):
    from .denoiser import DenoiserConfig, init_denoiser, train_denoiser

    manifest, _, X, _ = load_dataset(args.data, split="train")
    observed_rows = args.observed_rows if args.observed_rows is not None else args.height // 2
    images = np.concatenate([tile_images(w, args.height, observed_rows, args.image_stride) for w in X])
    if args.max_images and len(images) > args.max_images:
        pick = np.random.default_rng(args.seed).choice(len(images), args.max_images, replace=False)
        images = images[np.sort(pick)]
    if len(images) == 0:
        raise CLIError("windows are shorter than one image")
    config = DenoiserConfig(height=args.height, width=X.shape[1], observed_rows=observed_rows,
                            base_width=args.base_width, depth=args.depth,
                            time_embed_dim=args.time_embed_dim, seed=args.seed)
    sched = diffusion.build_schedule(args.timesteps, args.beta_min, args.beta_max)
    model = init_denoiser(config, sched)
    print(f"training on {len(images)} images of {args.height}x{X.shape[1]}, {model.num_parameters()} parameters")
    model, curve = train_denoiser(model, images, epochs=args.epochs, batch_size=args.batch_size,
                                  learning_rate=args.learning_rate, seed=args.seed,
                                  progress=lambda e, l: logger.info("epoch %d loss %.5f", e, l))
    model.save(args.out)
    _emit(args.out)
    _write_curve(Path(args.out).with_suffix(".loss.csv"), curve)


def cmd_train_classifier(args):
    from .classifier import SeizureClassifier

    _, _, X, y = load_dataset(args.data, split="train")
    if args.segment_samples:
        X = X[:, :, -args.segment_samples :]
    clf = SeizureClassifier(epochs=args.epochs, batch_size=args.batch_size,
                            learning_rate=args.learning_rate, threshold=args.threshold, seed=args.seed)
    try:
        clf.fit(X, y)
    except ValueError as exc:
        raise CLIError(str(exc)) from None
    clf.save(args.out)
    _emit(args.out)
    _write_curve(Path(args.out).with_suffix(".loss.csv"), clf.loss_curve_)


# ---------------------------------------------------------------- inference


def _load_denoiser(path):
    from .checkpoint import CheckpointError
    from .denoiser import Denoiser

    try:
        return Denoiser.load(path)
    except FileNotFoundError:
        raise CLIError(f"model checkpoint not found: {path}") from None
    except (CheckpointError, ValueError) as exc:
        raise CLIError(f"incompatible model checkpoint: {exc}") from None


def _load_classifier(path):
    from .checkpoint import CheckpointError
    from .classifier import SeizureClassifier

    try:
        return SeizureClassifier.load(path)
    except FileNotFoundError:
        raise CLIError(f"classifier checkpoint not found: {path}") from None
    except (CheckpointError, ValueError) as exc:
        raise CLIError(f"incompatible classifier checkpoint: {exc}") from None


def _origin_and_horizon(args, rate, n_samples, observed_rows):
    if args.horizon is not None:
        horizon = args.horizon
    elif args.horizon_seconds is not None:
        from .forecast import horizon_samples

        horizon = horizon_samples(args.horizon_seconds, rate)
    else:
        raise CLIError("give --horizon or --horizon-seconds")
    if args.start_sample is not None:
        origin = args.start_sample
    elif args.start_seconds is not None:
        origin = int(round(args.start_seconds * rate))
    else:
        origin = observed_rows
    if origin < observed_rows or origin > n_samples:
        raise CLIError(f"forecast origin {origin} needs {observed_rows} observed samples inside the recording")
    return origin, horizon


def _model_channels(args, width):
    if args.channels:
        return _labels(args.channels)
    return list(STANDARD_CHANNELS) if width == len(STANDARD_CHANNELS) else None


def cmd_forecast(args):
    from .forecast import forecast, per_channel_report, write_forecast_csv

    model = _load_denoiser(args.model)
    matrix, rate, labels = _load_signals(args, _model_channels(args, model.config.width))
    h_obs = model.config.observed_rows
    origin, horizon = _origin_and_horizon(args, rate, matrix.shape[1], h_obs)
    observed = matrix[:, origin - h_obs : origin]
    truth = matrix[:, origin : origin + horizon]
    have_truth = truth.shape[1] == horizon and horizon > 0
    if args.teacher_forced and not have_truth:
        raise CLIError("--teacher-forced needs the true future inside the input")
    result = forecast(model, model.schedule, observed, horizon, num_steps=args.steps, eta=args.eta,
                      seed=args.seed, truth=truth if have_truth else None, teacher_forced=args.teacher_forced)
    write_forecast_csv(args.out, result.generated, labels, truth if have_truth else None, start_index=origin)
    _emit(args.out)
    if have_truth:
        print(summarize(per_channel_report(result.generated, truth)["average"], "channel-averaged metrics:"))


def cmd_warn(args):
    from .classifier import early_warning
    from .forecast import forecast_batch

    model = _load_denoiser(args.model)
    clf = _load_classifier(args.classifier)
    if args.data:
        _, entries, X, y = load_dataset(args.data, split=args.split)
        h_obs = model.config.observed_rows
        horizon = X.shape[2] - h_obs
        if horizon <= 0:
            raise CLIError("dataset windows leave no room to forecast")
        scores = []
        for start in range(0, len(X), 64):
            gen, _ = forecast_batch(model, model.schedule, X[start : start + 64, :, :h_obs], horizon,
                                    num_steps=args.steps, eta=args.eta, seed=args.seed + start)
            if args.include_observed:
                gen = np.concatenate([X[start : start + 64, :, :h_obs], gen], axis=2)
            scores.append(clf.predict_proba(gen)[:, 1])
        scores = np.concatenate(scores)
        out = Path(args.out or "scores.csv")
        with open(out, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["id", "label", "score"])
            for e, label, s in zip(entries, y, scores):
                w.writerow([e["file"], int(label), format_value(s)])
        _emit(out)
        return
    matrix, rate, _ = _load_signals(args, _model_channels(args, model.config.width))
    origin, horizon = _origin_and_horizon(args, rate, matrix.shape[1], model.config.observed_rows)
    observed = matrix[:, origin - model.config.observed_rows : origin]
    try:
        pred = early_warning(model, model.schedule, clf, observed, horizon, threshold=args.threshold,
                             num_steps=args.steps, eta=args.eta, seed=args.seed,
                             include_observed=args.include_observed)
    except ValueError as exc:
        raise CLIError(str(exc)) from None
    record = {"probability": pred.probability, "label": pred.label, "threshold": pred.threshold,
              "origin_sample": origin, "horizon_samples": horizon}
    print(f"seizure probability {pred.probability:.4f} -> {'WARNING' if pred.label else 'no warning'}")
    if args.out:
        Path(args.out).write_text(json.dumps(record, sort_keys=True) + "\n", encoding="utf-8")
        _emit(args.out)


# ---------------------------------------------------------------- evaluation


def _read_truth(path):
    from .forecast import read_forecast_csv

    labels, pred, true = read_forecast_csv(path)
    return labels, (true if true is not None else pred)


def _regression_table(path, named_reports, labels):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["model", "channel", "MAE", "MSE", "RMSE", "R2"])
        for name, rep in named_reports:
            for label, r in zip(labels, rep["channels"]):
                w.writerow([name, label] + [format_value(r[k]) for k in ("MAE", "MSE", "RMSE", "R2")])
            w.writerow([name, "Average"] + [format_value(rep["average"][k]) for k in ("MAE", "MSE", "RMSE", "R2")])
    _emit(path)


def _read_scores(path):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        rows = list(reader)
        fields = reader.fieldnames or []
    if "label" not in fields or "score" not in fields:
        raise CLIError(f"{path}: scores CSV needs 'label' and 'score' columns")
    labels = np.array([int(r["label"]) for r in rows])
    cols = {"score": np.array([float(r["score"]) for r in rows])}
    if "score_b" in fields:
        cols["score_b"] = np.array([float(r["score_b"]) for r in rows])
    return labels, cols


def cmd_eval(args):
    from .forecast import per_channel_report, read_forecast_csv

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    if args.pred:
        labels, pred, embedded_truth = read_forecast_csv(args.pred)
        if args.true:
            true_labels, truth = _read_truth(args.true)
            if true_labels != labels:
                raise CLIError("prediction and truth CSVs list different channels")
        elif embedded_truth is not None:
            truth = embedded_truth
        else:
            raise CLIError("no ground truth: pass --true or a CSV with value_true")
        if pred.shape != truth.shape:
            raise CLIError(f"prediction {pred.shape} and truth {truth.shape} differ in shape")
        reports = [("model", per_channel_report(pred, truth))]
        for flag, name in ((args.baseline, "baseline"), (args.initial, "initial")):
            if flag:
                other_labels, other, _ = read_forecast_csv(flag)
                if other_labels != labels or other.shape != truth.shape:
                    raise CLIError(f"{flag} does not match the prediction layout")
                reports.append((name, per_channel_report(other, truth)))
        for name, rep in reports:
            for label, r in zip(labels, rep["channels"]):
                rows += [(f"{name}_{k}", label, v) for k, v in r.items()]
            rows += [(f"{name}_{k}", "Average", v) for k, v in rep["average"].items()]
        for name, rep in reports[1:]:
            a = [r["MAE"] for r in reports[0][1]["channels"]]
            b = [r["MAE"] for r in rep["channels"]]
            if len(a) >= 2:
                test = paired_t_test(a, b)
                rows += [(f"t_test_mae_vs_{name}_t", "ALL", test["t"]), (f"t_test_mae_vs_{name}_p", "ALL", test["p"])]
        _regression_table(out / "regression_table.csv", reports, labels)
        print(summarize(reports[0][1]["average"], "channel-averaged regression metrics:"))

    if args.scores:
        y, cols = _read_scores(args.scores)
        table = []
        with open(out / "roc.csv", "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["model", "fpr", "tpr", "threshold"])
            for name, s in cols.items():
                try:
                    (fpr, tpr, thr), auc = roc_auc(s, y)
                except ValueError as exc:
                    raise CLIError(f"{args.scores}: {exc}") from None
                for a, b, c in zip(fpr, tpr, thr):
                    w.writerow([name, format_value(a), format_value(b), format_value(c)])
                rep = classification_report((s >= args.threshold).astype(int), y)
                table.append((name, auc, rep))
                rows += [("AUC", name, auc)] + [(k, name, v) for k, v in rep.items()]
        _emit(out / "roc.csv")
        if "score_b" in cols:
            d = delong_test(cols["score"], cols["score_b"], y)
            rows += [("delong_z", "score_vs_score_b", d["z"]), ("delong_p", "score_vs_score_b", d["p"])]
        with open(out / "classification_table.csv", "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["model", "AUC", "accuracy", "precision", "recall", "F1"])
            for name, auc, rep in table:
                w.writerow([name, format_value(auc)] + [format_value(rep[k]) for k in ("accuracy", "precision", "recall", "F1")])
        _emit(out / "classification_table.csv")
        print(summarize({"AUC": table[0][1], **table[0][2]}, "classification metrics:"))

    if not rows:
        raise CLIError("nothing to evaluate: pass --pred and/or --scores")
    write_metrics_csv(out / "metrics.csv", rows)
    _emit(out / "metrics.csv")


# ---------------------------------------------------------------- plotting


def _svg_chart(series, title, xlabel="time index", ylabel="value (uV)", width=900, height=320, max_points=2000):
    """Standalone SVG line chart; ``series`` is a list of (name, colour, x, y)."""
    pad_l, pad_r, pad_t, pad_b = 70, 20, 30, 45
    xs = np.concatenate([s[2] for s in series])
    ys = np.concatenate([s[3] for s in series])
    x0, x1 = float(xs.min()), float(xs.max()) or 1.0
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def px(v):
        return pad_l + (v - x0) / (x1 - x0) * pw

    def py(v):
        return pad_t + (1 - (v - y0) / (y1 - y0)) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
        f'<line x1="{pad_l}" y1="{pad_t + ph}" x2="{pad_l + pw}" y2="{pad_t + ph}" stroke="black"/>',
        f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{pad_t + ph}" stroke="black"/>',
        f'<text x="{pad_l + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" font-family="sans-serif" font-size="12">{xlabel}</text>',
        f'<text x="16" y="{pad_t + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {pad_t + ph / 2:.1f})">{ylabel}</text>',
    ]
    for v, anchor in ((x0, "start"), (x1, "end")):
        parts.append(f'<text x="{px(v):.1f}" y="{pad_t + ph + 15}" text-anchor="{anchor}" font-family="sans-serif" font-size="10">{v:g}</text>')
    for v in (y0, y1):
        parts.append(f'<text x="{pad_l - 4}" y="{py(v) + 4:.1f}" text-anchor="end" font-family="sans-serif" font-size="10">{v:.4g}</text>')
    for k, (name, colour, x, y) in enumerate(series):
        step = max(1, len(x) // max_points)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[::step], y[::step]))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{pts}"/>')
        parts.append(f'<text x="{pad_l + 10 + 120 * k}" y="{pad_t + 12}" fill="{colour}" font-family="sans-serif" font-size="12">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_plot(args):
    with open(args.csv, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "value_pred" not in reader.fieldnames:
            raise CLIError(f"{args.csv}: not a forecast CSV")
        data = {}
        for row in reader:
            d = data.setdefault(row["channel"], {"t": [], "pred": [], "true": []})
            d["t"].append(int(row["time_index"]))
            d["pred"].append(float(row["value_pred"]))
            if row.get("value_true") not in (None, ""):
                d["true"].append(float(row["value_true"]))
    wanted = _labels(args.channels) if args.channels else list(data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for ch in wanted:
        if ch not in data:
            raise CLIError(f"channel {ch!r} not in {args.csv}")
        d = data[ch]
        t = np.array(d["t"])
        series = []
        if d["true"]:
            series.append(("original", "#1f77b4", t, np.array(d["true"])))
        series.append(("generated", "#ff7f0e", t, np.array(d["pred"])))
        path = out / f"forecast_{ch}.svg"
        path.write_text(_svg_chart(series, f"{ch}: original vs generated"), encoding="utf-8")
        _emit(path)


# ---------------------------------------------------------------- parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat 'key = value' config file; flags override it")
    common.add_argument("--seed", type=int, default=None, help="random seed (default: $EEGDIF_SEED or 0)")
    common.add_argument("--threads", type=int, default=1, help="torch intra-op threads (1 keeps runs reproducible)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="eegcast", description="Diffusion-based multi-channel EEG forecasting and seizure early warning.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic EDF recording and seizure annotations")
    p.add_argument("--out", required=True)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--seconds", type=float, default=600.0)
    p.add_argument("--rate", type=float, default=64.0)
    p.add_argument("--lag", type=int, default=8)
    p.add_argument("--noise-sd", type=float, default=2.0)
    p.add_argument("--band", type=_floats, default=(10.0, 24.0), help="lo,hi Hz of the driving mixture")
    p.add_argument("--burst-rate", type=float, default=0.0, help="expected bursts per minute")
    p.add_argument("--burst-gain", type=float, default=2.0)
    p.add_argument("--burst-seconds", type=_floats, default=(8.0, 20.0), help="min,max burst duration")
    p.add_argument("--spike-amplitude", type=float, default=60.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", parents=[common], help="EDF + annotations -> windowed dataset directory")
    p.add_argument("--edf", required=True)
    p.add_argument("--annotations")
    p.add_argument("--out", required=True)
    p.add_argument("--channels", help="comma-separated labels (default: the 16 standard channels)")
    p.add_argument("--window-seconds", type=float, default=30.0)
    p.add_argument("--stride-seconds", type=float)
    p.add_argument("--decimate", type=int, default=1)
    p.add_argument("--test-fraction", type=float, default=0.0)
    p.add_argument("--patient-id", default="")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train-diffusion", parents=[common], help="train the masked diffusion denoiser")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--height", type=int, default=16)
    p.add_argument("--observed-rows", type=int)
    p.add_argument("--image-stride", type=int, default=4)
    p.add_argument("--max-images", type=int, default=0)
    p.add_argument("--base-width", type=int, default=8)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--time-embed-dim", type=int, default=32)
    p.add_argument("--timesteps", type=int, default=diffusion.DEFAULT_TIMESTEPS)
    p.add_argument("--beta-min", type=float, default=diffusion.DEFAULT_BETA_MIN)
    p.add_argument("--beta-max", type=float, default=diffusion.DEFAULT_BETA_MAX)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.set_defaults(func=cmd_train_diffusion)

    p = sub.add_parser("train-classifier", parents=[common], help="train the CNN-LSTM seizure classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--segment-samples", type=int, default=0, help="train on the last N samples of each window")
    p.set_defaults(func=cmd_train_classifier)

    def inference_args(p):
        p.add_argument("--model", required=True)
        p.add_argument("--input", help="EDF file or .npy channels x samples matrix")
        p.add_argument("--channels", help="comma-separated channel labels to select")
        p.add_argument("--rate", type=float, help="sampling rate override (required for .npy)")
        p.add_argument("--start-seconds", type=float, help="forecast origin in seconds")
        p.add_argument("--start-sample", type=int, help="forecast origin in samples")
        p.add_argument("--horizon", type=int, help="forecast length in samples")
        p.add_argument("--horizon-seconds", type=float)
        p.add_argument("--steps", type=int, default=diffusion.DEFAULT_SAMPLING_STEPS)
        p.add_argument("--eta", type=float, default=0.0)

    p = sub.add_parser("forecast", parents=[common], help="forecast future multi-channel signals to CSV")
    inference_args(p)
    p.add_argument("--teacher-forced", action="store_true", help="condition each block on true rows")
    p.add_argument("--out", default="forecast.csv")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("warn", parents=[common], help="forecast and classify the generated future")
    inference_args(p)
    p.add_argument("--classifier", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--include-observed", action="store_true", help="classify observed + generated signals")
    p.add_argument("--data", help="score every window of a prepared dataset instead of --input")
    p.add_argument("--split", default="test")
    p.add_argument("--out")
    p.set_defaults(func=cmd_warn)

    p = sub.add_parser("eval", parents=[common], help="regression / classification reports")
    p.add_argument("--pred", help="forecast CSV")
    p.add_argument("--true", help="ground-truth CSV (forecast layout); default: value_true of --pred")
    p.add_argument("--baseline", help="competing forecast CSV for a paired comparison")
    p.add_argument("--initial", help="forecast CSV of an untrained model")
    p.add_argument("--scores", help="CSV with label,score[,score_b] columns")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", default="eval")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", parents=[common], help="forecast CSV -> SVG line charts")
    p.add_argument("--csv", required=True)
    p.add_argument("--channels")
    p.add_argument("--out", default="plots")
    p.set_defaults(func=cmd_plot)
    return parser


def _apply_config(parser, argv):
    """Re-parse with config-file values installed as subcommand defaults."""
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    if not args.config.exists():
        raise CLIError(f"config file not found: {args.config}")
    values = read_config(args.config)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    defaults = {}
    for action in subparser._actions:
        if action.dest not in values:
            continue
        raw = values.pop(action.dest)
        if isinstance(action, argparse._StoreTrueAction):
            defaults[action.dest] = raw.lower() in ("1", "true", "yes", "on")
        else:
            defaults[action.dest] = action.type(raw) if action.type else raw
    if values:
        raise CLIError(f"unknown config keys for '{args.command}': {', '.join(sorted(values))}")
    subparser.set_defaults(**defaults)
    for action in subparser._actions:
        if action.dest in defaults:
            action.required = False
    return parser.parse_args(argv)


def run(argv=None):
    """Run the CLI; returns a process exit code."""
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        import torch

        torch.set_num_threads(max(1, args.threads))
        if args.seed is None:
            args.seed = _default_seed()
        args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
