"""Masked DDIM: noise schedule, bottom-rows forward noising, reverse update,
epsilon-regression loss and the full completion loop.

Timesteps are 1-based; ``t = 0`` denotes clean data (alpha_bar = 1). Images
live in [0, 1] at the module boundary and are mapped to [-1, 1] internally by
:func:`training_loss` and :func:`complete_image`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_rng

DEFAULT_TIMESTEPS = 1000
DEFAULT_BETA_MIN = 1e-4
DEFAULT_BETA_MAX = 0.02
DEFAULT_SAMPLING_STEPS = 50


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear-beta schedule with cumulative retention ``alpha_bar[t-1]``."""

    betas: np.ndarray
    alpha_bar: np.ndarray
    beta_min: float
    beta_max: float

    @property
    def T(self):
        return int(self.alpha_bar.shape[0])

    def abar(self, t):
        """alpha_bar at (possibly array-valued) step ``t``; ``abar(0) == 1``."""
        t = np.asarray(t, dtype=np.int64)
        if np.any(t < 0) or np.any(t > self.T):
            raise ValueError(f"timestep out of range [0, {self.T}]")
        padded = np.concatenate([[1.0], self.alpha_bar])
        return padded[t]

    def to_dict(self):
        return {"T": self.T, "beta_min": self.beta_min, "beta_max": self.beta_max}

    @classmethod
    def from_dict(cls, d):
        return build_schedule(int(d["T"]), float(d["beta_min"]), float(d["beta_max"]))


def build_schedule(T=DEFAULT_TIMESTEPS, beta_min=DEFAULT_BETA_MIN, beta_max=DEFAULT_BETA_MAX):
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0 < beta_min <= beta_max < 1):
        raise ValueError("need 0 < beta_min <= beta_max < 1")
    betas = np.linspace(beta_min, beta_max, T, dtype=np.float64)
    alpha_bar = np.cumprod(1.0 - betas)
    return NoiseSchedule(betas, alpha_bar, float(beta_min), float(beta_max))


def completion_mask(height, width, observed_rows):
    """Boolean H x W mask that is True on the bottom ``height - observed_rows`` rows."""
    if not 0 <= observed_rows <= height:
        raise ValueError("observed_rows must lie in [0, height]")
    mask = np.zeros((height, width), dtype=bool)
    mask[observed_rows:] = True
    return mask


def validate_mask(mask):
    """Check that True entries form a contiguous suffix of complete rows."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("mask must be 2-D")
    rows = mask.any(axis=1)
    if not np.array_equal(rows, mask.all(axis=1)):
        raise ValueError("mask must cover whole rows")
    first = int(np.argmax(rows)) if rows.any() else mask.shape[0]
    if not rows[first:].all():
        raise ValueError("mask rows must be a contiguous bottom block")
    return mask


def to_model_space(x):
    return 2.0 * x - 1.0


def from_model_space(x):
    return (x + 1.0) / 2.0


def _is_torch(x):
    return type(x).__module__.startswith("torch")


def _where(cond, a, b):
    if _is_torch(a):
        import torch

        return torch.where(torch.as_tensor(cond, device=a.device), a, b)
    return np.where(cond, a, b)


def _per_sample(values, x):
    """Broadcast per-batch scalars against a (B, H, W) or (H, W) array."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 0:
        out = values.reshape(())
    else:
        out = values.reshape((-1,) + (1,) * (x.ndim - 1))
    if _is_torch(x):
        import torch

        return torch.as_tensor(out, dtype=x.dtype, device=x.device)
    return out


def forward_noise(x0, t, eps, mask, sched):
    """Noise only the masked entries: ``sqrt(ab)*x0 + sqrt(1-ab)*eps``.

    ``t`` may be a scalar step or one step per leading batch element.
    Unmasked entries are returned exactly as given.
    """
    if tuple(x0.shape) != tuple(eps.shape):
        raise ValueError(f"x0 {tuple(x0.shape)} and eps {tuple(eps.shape)} differ in shape")
    if tuple(np.shape(mask)) != tuple(x0.shape[-2:]):
        raise ValueError("mask shape must match the image shape")
    t = np.asarray(t)
    if np.any(t < 1):
        raise ValueError("forward_noise needs t >= 1")
    ab = sched.abar(t)
    noised = _per_sample(np.sqrt(ab), x0) * x0 + _per_sample(np.sqrt(1.0 - ab), x0) * eps
    return _where(mask, noised, x0)


def ddim_sigma(sched, t, t_prev, eta):
    ab_t = sched.abar(t)
    ab_prev = sched.abar(t_prev)
    return eta * np.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * np.sqrt(1.0 - ab_t / ab_prev)


def ddim_step(x_t, eps_pred, t, t_prev, sched, eta=0.0, noise=None):
    """One reverse DDIM update from step ``t`` to ``t_prev``.

    x0_hat = (x_t - sqrt(1 - ab_t) * eps_pred) / sqrt(ab_t)
    x_prev = sqrt(ab_prev) * x0_hat + sqrt(1 - ab_prev - sigma^2) * eps_pred + sigma * noise
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    if x_t.shape != eps_pred.shape:
        raise ValueError("eps_pred must be shaped like x_t")
    if not 0 <= t_prev < t:
        raise ValueError("need 0 <= t_prev < t")
    ab_t = float(sched.abar(t))
    ab_prev = float(sched.abar(t_prev))
    sigma = float(ddim_sigma(sched, t, t_prev, eta))
    dir_var = 1.0 - ab_prev - sigma**2
    if dir_var < -1e-12:
        raise ValueError(f"sigma_t^2 exceeds 1 - alpha_bar_prev (eta={eta} too large)")
    x0_hat = (x_t - math.sqrt(1.0 - ab_t) * eps_pred) / math.sqrt(ab_t)
    out = math.sqrt(ab_prev) * x0_hat + math.sqrt(max(dir_var, 0.0)) * eps_pred
    if sigma > 0:
        if noise is None:
            raise ValueError("eta > 0 needs a noise draw")
        out = out + sigma * np.asarray(noise, dtype=np.float64)
    return out


def inference_timesteps(T, num_steps):
    """Decreasing, evenly spaced integer steps from T down to 1."""
    if num_steps < 1:
        raise ValueError("num_steps must be >= 1")
    if num_steps > T:
        raise ValueError(f"num_steps ({num_steps}) exceeds the schedule length ({T})")
    if num_steps == 1:
        return np.array([T], dtype=np.int64)
    steps = np.rint(np.linspace(T, 1, num_steps)).astype(np.int64)
    return np.unique(steps)[::-1]


def training_loss(denoiser, x0, mask, sched, rng):
    """Masked epsilon-regression loss for one draw of (t, eps).

    ``x0`` is a clean image in [0, 1], shape (H, W) or (B, H, W); numpy or
    torch. Observed rows reach ``denoiser`` clean; the loss is the mean
    squared error over masked entries only. Returns a float for numpy input
    and a differentiable scalar tensor for torch input.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty completion mask: nothing to learn")
    rng = check_rng(rng)
    batch = x0.shape[0] if x0.ndim == 3 else None
    t = rng.integers(1, sched.T + 1, size=batch if batch is not None else ())
    eps = rng.standard_normal(tuple(x0.shape))
    if _is_torch(x0):
        import torch

        eps = torch.as_tensor(eps, dtype=x0.dtype, device=x0.device)
    x0m = to_model_space(x0)
    x_t = forward_noise(x0m, t, eps, mask, sched)
    pred = denoiser(x_t, t)
    sq = (eps - pred) ** 2
    if _is_torch(sq):
        import torch

        m = torch.as_tensor(mask, device=sq.device)
        return sq[..., m].mean()
    return float(np.mean(sq[..., mask]))


def complete_image(denoiser, observed, mask, sched, num_steps=DEFAULT_SAMPLING_STEPS, eta=0.0, rng=None):
    """Generate the masked rows of ``observed`` by reverse DDIM sampling.

    Parameters
    ----------
    denoiser : callable
        ``denoiser(x_t, t)`` returning predicted noise shaped like ``x_t``;
        ``t`` is an int array with one entry per image.
    observed : array, shape (H, W) or (B, H, W)
        Images in [0, 1]. Values under the mask are ignored.
    mask : bool array, shape (H, W)
    num_steps : int
        Number of reverse steps taken from T down to 1 before the final
        jump to clean data.

    Returns
    -------
    ndarray shaped like ``observed``: masked rows clipped to [0, 1],
    unmasked rows bit-identical to the input.
    """
    observed = np.asarray(observed, dtype=np.float64)
    mask = validate_mask(mask)
    if observed.shape[-2:] != mask.shape:
        raise ValueError("mask shape must match the image shape")
    steps = inference_timesteps(sched.T, num_steps)
    if not mask.any():
        return observed.copy()
    rng = check_rng(rng)
    batch = observed.shape[0] if observed.ndim == 3 else None
    clean = to_model_space(observed)
    x = np.where(mask, rng.standard_normal(observed.shape), clean)
    schedule = list(steps) + [0]
    for t, t_prev in zip(schedule[:-1], schedule[1:]):
        t_arr = np.full(batch, t, dtype=np.int64) if batch is not None else np.int64(t)
        eps = np.asarray(denoiser(x, t_arr), dtype=np.float64)
        noise = rng.standard_normal(observed.shape) if eta > 0 else None
        x_prev = ddim_step(x, eps, int(t), int(t_prev), sched, eta=eta, noise=noise)
        x = np.where(mask, x_prev, clean)
    out = np.clip(from_model_space(x), 0.0, 1.0)
    return np.where(mask, out, observed)
