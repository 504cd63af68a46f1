"""The noise-prediction network: a small U-Net with a sinusoidal timestep
embedding, plus its masked epsilon-regression training loop."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from . import diffusion
from .checkpoint import load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

SCALER_POLICY = "observed-window-minmax"


@dataclass(frozen=True)
class DenoiserConfig:
    height: int = 16
    width: int = 16
    observed_rows: int = 8
    base_width: int = 8
    depth: int = 2
    time_embed_dim: int = 32
    seed: int = 0

    def validate(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("image height and width must be >= 1")
        if not 0 <= self.observed_rows <= self.height:
            raise ValueError("observed_rows must lie in [0, height]")
        if self.base_width < 1:
            raise ValueError("base_width must be >= 1")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if 2**self.depth > max(self.height, self.width):
            raise ValueError(f"depth {self.depth} downsamples a {self.height}x{self.width} image below one pixel")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2:
            raise ValueError("time_embed_dim must be an even integer >= 2")

    @property
    def generated_rows(self):
        return self.height - self.observed_rows


def timestep_embedding(t, dim):
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=t.dtype) / half)
    args = t[:, None] * freqs[None]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


def _groups(ch):
    return math.gcd(ch, 8)


class ResBlock(nn.Module):
    def __init__(self, c_in, c_out, t_dim):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(c_in), c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        # scale and shift applied after norm2, so the normalization cannot cancel them
        self.temb = nn.Linear(t_dim, 2 * c_out)
        self.norm2 = nn.GroupNorm(_groups(c_out), c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        scale, shift = self.temb(temb)[:, :, None, None].chunk(2, dim=1)
        h = self.norm2(h) * (1 + scale) + shift
        h = self.conv2(F.silu(h))
        return h + self.skip(x)


class UNet(nn.Module):
    """Encoder-decoder over (B, 2, H, W): noisy image plus a mask plane."""

    def __init__(self, config):
        super().__init__()
        self.config = config
        width, t_dim = config.base_width, config.time_embed_dim
        chans = [width * min(2**level, 4) for level in range(config.depth + 1)]
        self.time_mlp = nn.Sequential(nn.Linear(t_dim, t_dim), nn.SiLU(), nn.Linear(t_dim, t_dim))
        self.stem = nn.Conv2d(2, chans[0], 3, padding=1)
        self.down = nn.ModuleList(ResBlock(chans[i], chans[i + 1], t_dim) for i in range(config.depth))
        self.mid = ResBlock(chans[-1], chans[-1], t_dim)
        self.up = nn.ModuleList(
            ResBlock(chans[i + 1] + chans[i + 1], chans[i], t_dim) for i in reversed(range(config.depth))
        )
        self.out_norm = nn.GroupNorm(_groups(chans[0]), chans[0])
        self.out = nn.Conv2d(chans[0], 1, 3, padding=1)

    def forward(self, x, t):
        cfg = self.config
        temb = self.time_mlp(timestep_embedding(t.to(x.dtype), cfg.time_embed_dim))
        mask = torch.zeros_like(x)
        mask[:, cfg.observed_rows :, :] = 1.0
        h = torch.stack([x, mask], dim=1)
        mult = 2**cfg.depth
        pad_h = (-cfg.height) % mult
        pad_w = (-cfg.width) % mult
        if pad_h or pad_w:
            h = F.pad(h, (0, pad_w, 0, pad_h))
        h = self.stem(h)
        skips = []
        for block in self.down:
            h = block(h, temb)
            skips.append(h)
            h = F.avg_pool2d(h, 2)
        h = self.mid(h, temb)
        for block in self.up:
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = block(torch.cat([h, skips.pop()], dim=1), temb)
        h = self.out(F.silu(self.out_norm(h)))
        return h[:, 0, : cfg.height, : cfg.width]


class Denoiser:
    """Trainable epsilon predictor for H x W signal images.

    Calling the object with a torch tensor keeps the autograd graph (used in
    training); calling it with a numpy array goes through :meth:`predict`.
    """

    def __init__(self, config, net=None, schedule=None):
        config.validate()
        self.config = config
        self.schedule = schedule if schedule is not None else diffusion.build_schedule()
        self.scaler_policy = SCALER_POLICY
        if net is None:
            with torch.random.fork_rng(devices=[]):
                torch.manual_seed(config.seed)
                net = UNet(config)
        self.net = net
        self.net.eval()

    @property
    def mask(self):
        return diffusion.completion_mask(self.config.height, self.config.width, self.config.observed_rows)

    def parameter_vector(self):
        return torch.cat([p.detach().reshape(-1) for p in self.net.parameters()]).double().numpy()

    def num_parameters(self):
        return sum(p.numel() for p in self.net.parameters())

    def _forward(self, x, t):
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        if tuple(x.shape[-2:]) != (self.config.height, self.config.width):
            raise ValueError(f"expected {self.config.height}x{self.config.width} images, got {tuple(x.shape[-2:])}")
        t = torch.as_tensor(np.broadcast_to(np.asarray(t), (x.shape[0],)).copy(), dtype=x.dtype)
        out = self.net(x, t)
        return out[0] if squeeze else out

    def __call__(self, x_t, t):
        if isinstance(x_t, torch.Tensor):
            return self._forward(x_t, t)
        return self.predict(x_t, t)

    def predict(self, x_t, t):
        x = np.asarray(x_t, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise ValueError("x_t contains non-finite values")
        t_arr = np.asarray(t)
        if np.any(t_arr < 1) or np.any(t_arr > self.schedule.T):
            raise ValueError(f"timestep outside [1, {self.schedule.T}]")
        dtype = next(self.net.parameters()).dtype
        with torch.no_grad():
            out = self._forward(torch.as_tensor(x, dtype=dtype), t_arr)
        return out.double().numpy()

    def metadata(self):
        return {
            "config": asdict(self.config),
            "schedule": self.schedule.to_dict(),
            "scaler_policy": self.scaler_policy,
        }

    def save(self, path):
        return save_checkpoint(path, "denoiser", self.metadata(), {k: v.detach().numpy() for k, v in self.net.state_dict().items()})

    @classmethod
    def load(cls, path):
        meta, state = load_checkpoint(path, kind="denoiser")
        config = DenoiserConfig(**meta["config"])
        schedule = diffusion.NoiseSchedule.from_dict(meta["schedule"])
        model = cls(config, schedule=schedule)
        expected = list(model.net.state_dict())
        if expected != list(state):
            raise ValueError("checkpoint parameters do not match the architecture in its metadata")
        model.net.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in state.items()})
        model.net.eval()
        return model


def init_denoiser(config, schedule=None):
    """Fresh denoiser; PyTorch default layer initialization under ``config.seed``."""
    return Denoiser(config, schedule=schedule)


def train_denoiser(denoiser, images, mask=None, sched=None, epochs=100, batch_size=16,
                   learning_rate=1e-3, seed=0, progress=None):
    """Fit ``denoiser`` with Adam on masked epsilon regression.

    ``images`` are H x W signal images in [0, 1]. Returns a trained copy and
    the per-epoch mean loss; the input model is left untouched.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 2:
        images = images[None]
    if images.ndim != 3 or len(images) == 0:
        raise ValueError("need a non-empty stack of H x W images")
    mask = denoiser.mask if mask is None else np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty completion mask: nothing to learn")
    if not np.array_equal(mask, denoiser.mask):
        raise ValueError("mask disagrees with the denoiser's observed_rows")
    sched = denoiser.schedule if sched is None else sched
    model = copy.deepcopy(denoiser)
    model.schedule = sched
    curve = []
    if epochs <= 0:
        return model, curve

    rng = np.random.default_rng(seed)
    dtype = next(model.net.parameters()).dtype
    data = torch.as_tensor(images, dtype=dtype)
    opt = torch.optim.Adam(model.net.parameters(), lr=learning_rate)
    model.net.train()
    for epoch in range(epochs):
        order = rng.permutation(len(images))
        total = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            loss = diffusion.training_loss(model, data[idx], mask, sched, rng)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        curve.append(total / len(images))
        if progress is not None:
            progress(epoch, curve[-1])
    model.net.eval()
    return model, curve
