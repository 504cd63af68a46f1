"""Per-channel min-max scaling and the signals <-> signal-image layout.

A signal image stores time along rows (top to bottom) and channels along
columns, so ``image[j, i]`` is the normalized value of channel ``i`` at time
``j``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_matrix, check_windows

DEGENERATE_LEVEL = 0.5


@dataclass(frozen=True)
class ChannelScaler:
    """Per-channel minimum and maximum used for min-max scaling."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=np.float64).reshape(-1)
        maxs = np.asarray(self.maxs, dtype=np.float64).reshape(-1)
        if mins.shape != maxs.shape:
            raise ValueError("mins and maxs must have the same length")
        if np.any(maxs < mins):
            raise ValueError("every channel needs max >= min")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    def __len__(self):
        return self.mins.shape[0]

    @property
    def degenerate(self):
        return self.maxs == self.mins

    def to_dict(self):
        return {"mins": self.mins.tolist(), "maxs": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mins"]), np.asarray(d["maxs"]))


def fit_scaler(signals):
    """Compute the per-channel min/max of a C x N matrix."""
    x = check_matrix(signals, "signals")
    return ChannelScaler(x.min(axis=1), x.max(axis=1))


def apply_scaler(signals, scaler):
    """Scale with an existing scaler; values may leave [0, 1] for unseen data."""
    x = check_matrix(signals, "signals")
    if x.shape[0] != len(scaler):
        raise ValueError(f"scaler has {len(scaler)} channels, signals have {x.shape[0]}")
    span = scaler.maxs - scaler.mins
    safe = np.where(span > 0, span, 1.0)
    out = (x - scaler.mins[:, None]) / safe[:, None]
    out[scaler.degenerate] = DEGENERATE_LEVEL
    return out


def normalize(signals):
    """Min-max normalize every channel of a C x N matrix into [0, 1].

    Constant channels map to 0.5.

    Returns
    -------
    normalized : ndarray, shape (C, N)
    scaler : ChannelScaler
    """
    scaler = fit_scaler(signals)
    return apply_scaler(signals, scaler), scaler


def denormalize(normalized, scaler):
    """Invert :func:`normalize`; degenerate channels come back as their min."""
    x = check_matrix(normalized, "normalized")
    if x.shape[0] != len(scaler):
        raise ValueError(f"scaler has {len(scaler)} channels, signals have {x.shape[0]}")
    span = scaler.maxs - scaler.mins
    out = x * span[:, None] + scaler.mins[:, None]
    out[scaler.degenerate] = scaler.mins[scaler.degenerate, None]
    return out


def to_image(normalized):
    """C x H channels-by-time matrix -> H x C signal image."""
    x = np.asarray(normalized, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D channels x time matrix, got shape {x.shape}")
    return np.ascontiguousarray(x.T)


def from_image(image):
    """H x C signal image -> C x H channels-by-time matrix."""
    x = np.asarray(image, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {x.shape}")
    return np.ascontiguousarray(x.T)


def decimate(signals, factor):
    """Keep every ``factor``-th sample along time (no anti-alias filter)."""
    if factor < 1:
        raise ValueError("decimation factor must be >= 1")
    return np.asarray(signals)[..., ::factor]


class SignalImageTransformer(TransformerMixin, BaseEstimator):
    """Turn C x H windows into normalized H x C signal images.

    Parameters
    ----------
    fit_rows : int or None
        Number of leading time points each window's scaler is computed from.
        ``None`` uses the whole window. Setting it to the observed-row count
        matches how scalers are computed at forecast time.

    After ``transform`` the per-window scalers of the last call are kept in
    ``scalers_`` so ``inverse_transform`` can restore physical units.
    """

    def __init__(self, fit_rows=None):
        self.fit_rows = fit_rows

    def fit(self, X, y=None):
        X = check_windows(X)
        self.n_channels_ = X.shape[1]
        self.n_rows_ = X.shape[2]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_channels_")
        X = check_windows(X)
        if X.shape[1] != self.n_channels_:
            raise ValueError(f"expected {self.n_channels_} channels, got {X.shape[1]}")
        images, scalers = [], []
        for window in X:
            ref = window if self.fit_rows is None else window[:, : self.fit_rows]
            scaler = fit_scaler(ref)
            images.append(to_image(apply_scaler(window, scaler)))
            scalers.append(scaler)
        self.scalers_ = scalers
        return np.stack(images)

    def inverse_transform(self, images, scalers=None):
        check_is_fitted(self, "n_channels_")
        scalers = self.scalers_ if scalers is None else scalers
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 2:
            images = images[None]
        if len(scalers) != len(images):
            raise ValueError("need one scaler per image")
        return np.stack([denormalize(from_image(im), s) for im, s in zip(images, scalers)])


def tile_images(signals, height, observed_rows, stride=None):
    """Cut a C x N recording into H x C training images.

    Each tile is scaled with the min-max of its first ``observed_rows``
    time points (the part visible at forecast time), so generated rows may
    fall outside [0, 1]. ``observed_rows = height`` scales on the full tile.
    """
    x = check_matrix(signals, "signals")
    stride = height if stride is None else stride
    if height < 1 or stride < 1:
        raise ValueError("height and stride must be >= 1")
    ref = max(observed_rows, 1)
    tiles = []
    for start in range(0, x.shape[1] - height + 1, stride):
        window = x[:, start : start + height]
        tiles.append(to_image(apply_scaler(window, fit_scaler(window[:, :ref]))))
    if not tiles:
        return np.zeros((0, height, x.shape[0]))
    return np.stack(tiles)
