"""CNN-LSTM seizure classifier and the forecast -> classify early-warning
pipeline."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted
from torch import nn
from torch.nn import functional as F

from . import diffusion
from ._validation import check_binary_labels, check_matrix, check_windows
from .checkpoint import load_checkpoint, save_checkpoint
from .forecast import forecast


@dataclass(frozen=True)
class SeizurePrediction:
    probability: float
    label: int
    threshold: float = 0.5


def standardize_windows(X):
    """Zero-mean, unit-variance per channel within each window."""
    mean = X.mean(axis=-1, keepdims=True)
    std = X.std(axis=-1, keepdims=True)
    return (X - mean) / np.where(std > 0, std, 1.0)


class CNNLSTM(nn.Module):
    def __init__(self, n_channels, conv_channels=(16, 32), kernel_size=5, hidden_size=64):
        super().__init__()
        c1, c2 = conv_channels
        self.conv1 = nn.Conv1d(n_channels, c1, kernel_size, padding=kernel_size // 2)
        self.conv2 = nn.Conv1d(c1, c2, kernel_size, padding=kernel_size // 2)
        self.lstm = nn.LSTM(c2, hidden_size, batch_first=True)
        self.head = nn.Linear(hidden_size, 1)

    def forward(self, x):
        # x: (batch, channels, time)
        h = F.relu(self.conv1(x))
        if h.shape[-1] >= 2:
            h = F.max_pool1d(h, 2)
        h = F.relu(self.conv2(h))
        if h.shape[-1] >= 2:
            h = F.max_pool1d(h, 2)
        out, _ = self.lstm(h.transpose(1, 2))
        return self.head(out[:, -1])[:, 0]


class SeizureClassifier(ClassifierMixin, BaseEstimator):
    """Two 1-D convolutions over time, an LSTM and a sigmoid head, trained
    with binary cross-entropy on per-window standardized signals.

    ``X`` is (n_windows, n_channels, n_samples) in physical units.
    """

    def __init__(self, conv_channels=(16, 32), kernel_size=5, hidden_size=64, epochs=20,
                 batch_size=32, learning_rate=1e-3, threshold=0.5, clip_norm=1.0, seed=0):
        self.conv_channels = conv_channels
        self.kernel_size = kernel_size
        self.hidden_size = hidden_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.threshold = threshold
        self.clip_norm = clip_norm
        self.seed = seed

    def _build(self, n_channels):
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self.seed)
            return CNNLSTM(n_channels, tuple(self.conv_channels), self.kernel_size, self.hidden_size)

    def fit(self, X, y):
        X = check_windows(X)
        y = check_binary_labels(y)
        if len(X) != len(y):
            raise ValueError("X and y differ in length")
        if y.min() == y.max():
            raise ValueError("training set contains a single class")
        self.classes_ = np.array([0, 1])
        self.n_channels_ = X.shape[1]
        self.model_ = self._build(self.n_channels_)
        self.loss_curve_ = []
        if self.epochs <= 0:
            warnings.warn("epochs <= 0: returning an untrained classifier", stacklevel=2)
            self.model_.eval()
            return self
        rng = np.random.default_rng(self.seed)
        data = torch.as_tensor(standardize_windows(X), dtype=torch.float32)
        target = torch.as_tensor(y, dtype=torch.float32)
        opt = torch.optim.Adam(self.model_.parameters(), lr=self.learning_rate)
        sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=self.epochs)
        self.model_.train()
        for _ in range(self.epochs):
            order = rng.permutation(len(X))
            total = 0.0
            for s in range(0, len(order), self.batch_size):
                b = order[s : s + self.batch_size]
                loss = F.binary_cross_entropy_with_logits(self.model_(data[b]), target[b])
                opt.zero_grad()
                loss.backward()
                if self.clip_norm:
                    nn.utils.clip_grad_norm_(self.model_.parameters(), self.clip_norm)
                opt.step()
                total += float(loss.detach()) * len(b)
            sched.step()
            self.loss_curve_.append(total / len(X))
        self.model_.eval()
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_windows(X)
        if X.shape[1] != self.n_channels_:
            raise ValueError(f"classifier expects {self.n_channels_} channels, got {X.shape[1]}")
        with torch.no_grad():
            logits = self.model_(torch.as_tensor(standardize_windows(X), dtype=torch.float32))
        return logits.double().numpy()

    def predict_proba(self, X):
        p = 1.0 / (1.0 + np.exp(-self.decision_function(X)))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= self.threshold).astype(np.int64)

    def save(self, path):
        check_is_fitted(self, "model_")
        meta = {"params": {k: list(v) if isinstance(v, tuple) else v for k, v in self.get_params().items()},
                "n_channels": self.n_channels_}
        state = {k: v.detach().numpy() for k, v in self.model_.state_dict().items()}
        return save_checkpoint(path, "classifier", meta, state)

    @classmethod
    def load(cls, path):
        meta, state = load_checkpoint(path, kind="classifier")
        params = dict(meta["params"])
        params["conv_channels"] = tuple(params["conv_channels"])
        clf = cls(**params)
        clf.classes_ = np.array([0, 1])
        clf.n_channels_ = int(meta["n_channels"])
        clf.model_ = clf._build(clf.n_channels_)
        if list(clf.model_.state_dict()) != list(state):
            raise ValueError("checkpoint parameters do not match the classifier architecture")
        clf.model_.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in state.items()})
        clf.model_.eval()
        clf.loss_curve_ = []
        return clf


def train_classifier(samples, hyperparams=None, seed=0):
    """Fit a :class:`SeizureClassifier` on a list of ``WindowedSample``."""
    if not samples:
        raise ValueError("no training samples")
    X = np.stack([s.data for s in samples])
    y = np.array([s.label for s in samples])
    return SeizureClassifier(seed=seed, **(hyperparams or {})).fit(X, y)


def predict_seizure(model, signals, threshold=None):
    x = check_matrix(signals, "signals")
    threshold = model.threshold if threshold is None else threshold
    p = float(model.predict_proba(x[None])[0, 1])
    return SeizurePrediction(p, int(p >= threshold), float(threshold))


def early_warning(denoiser, sched, model, observed, horizon, threshold=0.5,
                  num_steps=diffusion.DEFAULT_SAMPLING_STEPS, eta=0.0, seed=0, include_observed=False):
    """Forecast ``horizon`` samples and classify the generated future.

    With ``include_observed`` the classifier sees observed + generated
    signals concatenated along time instead of the generated part alone.
    """
    if horizon <= 0:
        raise ValueError("early warning needs horizon > 0")
    result = forecast(denoiser, sched, observed, horizon, num_steps=num_steps, eta=eta, seed=seed)
    signals = result.generated
    if include_observed:
        signals = np.concatenate([np.asarray(observed, dtype=np.float64), signals], axis=1)
    return predict_seizure(model, signals, threshold)
