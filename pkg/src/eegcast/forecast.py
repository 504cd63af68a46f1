"""Rolling masked completion for arbitrary-horizon multi-channel forecasts,
and a per-channel recurrent baseline."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted
from torch import nn

from . import diffusion
from ._validation import check_matrix, check_windows
from .imaging import ChannelScaler, apply_scaler, denormalize, fit_scaler
from .metrics import format_value, regression_report


def horizon_samples(seconds, rate):
    """Number of samples covering ``seconds`` at ``rate`` Hz."""
    return int(round(seconds * rate))


def completion_iterations(horizon, generated_rows):
    return math.ceil(horizon / generated_rows) if horizon > 0 else 0


@dataclass
class ForecastResult:
    generated: np.ndarray
    horizon: int
    scaler: ChannelScaler | None = None
    metrics: dict | None = field(default=None)

    def channel_reports(self):
        return None if self.metrics is None else self.metrics["channels"]


def per_channel_report(pred, truth):
    """Regression metrics per channel plus their channel average."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction {pred.shape} and truth {truth.shape} differ in shape")
    channels = [regression_report(p, t) for p, t in zip(pred, truth)]
    average = {k: float(np.mean([c[k] for c in channels])) for k in channels[0]}
    return {"channels": channels, "average": average}


def forecast_batch(denoiser, sched, observed, horizon, num_steps=diffusion.DEFAULT_SAMPLING_STEPS,
                   eta=0.0, seed=0, truth=None, teacher_forced=False):
    """Forecast ``horizon`` samples for a stack of observed windows.

    Parameters
    ----------
    observed : array (n, C, H_obs)
        Observed physical-unit signals; ``H_obs`` must equal the model's
        observed-row count and ``C`` its image width.
    truth : array (n, C, >= horizon), optional
        Required when ``teacher_forced`` is set: each block is then
        conditioned on the true preceding rows rather than generated ones.

    Returns
    -------
    generated : array (n, C, horizon) in physical units
    scalers : list of ChannelScaler, one per window
    """
    cfg = denoiser.config
    observed = check_windows(observed, "observed")
    n, C, h_obs = observed.shape
    if C != cfg.width:
        raise ValueError(f"model expects {cfg.width} channels, got {C}")
    if h_obs != cfg.observed_rows:
        raise ValueError(f"model expects {cfg.observed_rows} observed rows, got {h_obs}")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    gen_rows = cfg.height - cfg.observed_rows
    if horizon > 0 and gen_rows == 0:
        raise ValueError("model has no generated rows (observed_rows == height)")
    scalers = [fit_scaler(w) for w in observed]
    if horizon == 0:
        return np.zeros((n, C, 0)), scalers
    if teacher_forced:
        if truth is None:
            raise ValueError("teacher forcing needs the true future")
        truth = np.asarray(truth, dtype=np.float64)
        true_norm = np.stack([apply_scaler(t, s).T for t, s in zip(truth, scalers)])

    ctx = np.stack([apply_scaler(w, s).T for w, s in zip(observed, scalers)])
    history = ctx
    mask = denoiser.mask
    rng = np.random.default_rng(seed)
    blocks = []
    for i in range(completion_iterations(horizon, gen_rows)):
        image = np.concatenate([ctx, np.zeros((n, gen_rows, C))], axis=1)
        done = diffusion.complete_image(denoiser, image, mask, sched, num_steps=num_steps, eta=eta, rng=rng)
        block = done[:, h_obs:]
        blocks.append(block)
        if teacher_forced:
            stop = (i + 1) * gen_rows
            history = np.concatenate([history, true_norm[:, stop - gen_rows : stop]], axis=1)
        else:
            history = np.concatenate([history, block], axis=1)
        ctx = history[:, -h_obs:]
    rows = np.concatenate(blocks, axis=1)[:, :horizon]
    generated = np.stack([denormalize(r.T, s) for r, s in zip(rows, scalers)])
    return generated, scalers


def forecast(denoiser, sched, observed, horizon, num_steps=diffusion.DEFAULT_SAMPLING_STEPS, eta=0.0,
             seed=0, truth=None, teacher_forced=False):
    """Forecast one C x H_obs window ``horizon`` samples ahead.

    When ``truth`` (C x >= horizon) is given, per-channel MAE/MSE/RMSE/R^2
    against its first ``horizon`` samples are attached to the result.
    """
    observed = check_matrix(observed, "observed")
    batch_truth = None if truth is None else np.asarray(truth, dtype=np.float64)[None]
    generated, scalers = forecast_batch(
        denoiser, sched, observed[None], horizon, num_steps=num_steps, eta=eta, seed=seed,
        truth=batch_truth, teacher_forced=teacher_forced,
    )
    result = ForecastResult(generated[0], int(horizon), scalers[0])
    if truth is not None and horizon > 0:
        result.metrics = per_channel_report(result.generated, np.asarray(truth)[:, :horizon])
    return result


def write_forecast_csv(path, generated, labels, truth=None, start_index=0):
    """Write ``time_index,channel,value_pred[,value_true]`` rows, time-major."""
    generated = np.asarray(generated)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        header = ["time_index", "channel", "value_pred"] + (["value_true"] if truth is not None else [])
        w.writerow(header)
        for j in range(generated.shape[1]):
            for c, label in enumerate(labels):
                row = [start_index + j, label, format_value(generated[c, j])]
                if truth is not None:
                    row.append(format_value(truth[c, j]))
                w.writerow(row)


def read_forecast_csv(path):
    """Return ``(labels, pred C x N, truth C x N or None)`` from a forecast CSV."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "value_pred" not in reader.fieldnames:
            raise ValueError(f"{path}: not a forecast CSV (missing value_pred column)")
        has_true = "value_true" in reader.fieldnames
        labels, pred, true = [], {}, {}
        for row in reader:
            ch = row["channel"]
            if ch not in pred:
                labels.append(ch)
                pred[ch], true[ch] = [], []
            pred[ch].append(float(row["value_pred"]))
            if has_true:
                true[ch].append(float(row["value_true"]))
    pred_m = np.array([pred[c] for c in labels])
    true_m = np.array([true[c] for c in labels]) if has_true else None
    return labels, pred_m, true_m


class _OneStepLSTM(nn.Module):
    def __init__(self, hidden_size):
        super().__init__()
        self.lstm = nn.LSTM(1, hidden_size, batch_first=True)
        self.head = nn.Linear(hidden_size, 1)

    def forward(self, x):
        out, _ = self.lstm(x[..., None])
        return self.head(out[:, -1])[:, 0]


class LSTMBaselineForecaster(RegressorMixin, BaseEstimator):
    """Single-channel LSTM trained on lookback -> next-sample pairs and rolled
    out autoregressively. One instance models one channel.

    ``predict(X)`` takes contexts of shape (n, >= lookback) and returns
    (n, horizon) rollouts.
    """

    def __init__(self, lookback=32, hidden_size=32, horizon=1, epochs=20, batch_size=64,
                 learning_rate=1e-2, max_pairs=4096, seed=0):
        self.lookback = lookback
        self.hidden_size = hidden_size
        self.horizon = horizon
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.max_pairs = max_pairs
        self.seed = seed

    def fit(self, X, y=None):
        series = np.asarray(X, dtype=np.float64).ravel()
        if len(series) <= self.lookback:
            raise ValueError(f"series of length {len(series)} is too short for lookback {self.lookback}")
        rng = np.random.default_rng(self.seed)
        self.mean_ = float(series.mean())
        std = float(series.std())
        self.scale_ = std if std > 0 else 1.0
        z = (series - self.mean_) / self.scale_
        starts = np.arange(len(z) - self.lookback)
        if len(starts) > self.max_pairs:
            starts = np.sort(rng.choice(starts, self.max_pairs, replace=False))
        idx = starts[:, None] + np.arange(self.lookback)
        inputs = torch.as_tensor(z[idx], dtype=torch.float32)
        targets = torch.as_tensor(z[starts + self.lookback], dtype=torch.float32)

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self.seed)
            self.model_ = _OneStepLSTM(self.hidden_size)
        opt = torch.optim.Adam(self.model_.parameters(), lr=self.learning_rate)
        self.loss_curve_ = []
        for _ in range(self.epochs):
            order = rng.permutation(len(starts))
            total = 0.0
            for s in range(0, len(order), self.batch_size):
                b = order[s : s + self.batch_size]
                loss = torch.mean((self.model_(inputs[b]) - targets[b]) ** 2)
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += float(loss.detach()) * len(b)
            self.loss_curve_.append(total / len(starts))
        self.model_.eval()
        return self

    def rollout(self, context, horizon):
        check_is_fitted(self, "model_")
        ctx = np.atleast_2d(np.asarray(context, dtype=np.float64))
        if ctx.shape[1] < self.lookback:
            raise ValueError(f"context needs at least {self.lookback} samples")
        if horizon <= 0:
            return np.zeros((ctx.shape[0], 0))
        window = torch.as_tensor((ctx[:, -self.lookback :] - self.mean_) / self.scale_, dtype=torch.float32)
        out = []
        with torch.no_grad():
            for _ in range(horizon):
                nxt = self.model_(window)
                out.append(nxt)
                window = torch.cat([window[:, 1:], nxt[:, None]], dim=1)
        return torch.stack(out, dim=1).double().numpy() * self.scale_ + self.mean_

    def predict(self, X):
        return self.rollout(X, self.horizon)


def lstm_baseline_forecast(channel, horizon, hyperparams=None, seed=0):
    """Train on one channel's series and roll out ``horizon`` steps past its end."""
    series = np.asarray(channel, dtype=np.float64).ravel()
    model = LSTMBaselineForecaster(seed=seed, **(hyperparams or {}))
    if horizon == 0:
        return np.zeros(0)
    model.fit(series)
    return model.rollout(series[None], horizon)[0]
