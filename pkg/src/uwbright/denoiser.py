"""Conditional noise predictor: a U-Net modulated by brightness and timestep.

The noisy image is concatenated channel-wise with the 4-channel fusion map
(or zeros for the unconditional branch). Every residual block applies a
FiLM scale-and-shift computed from the joint (timestep, brightness-level)
embedding, so the target brightness steers features at every resolution.

Tensors are NCHW; images are 3-channel, fusion maps 4-channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .imageops import LUMA_WEIGHTS

FUSION_CHANNELS = 4
IMAGE_CHANNELS = 3


@dataclass(frozen=True)
class DenoiserConfig:
    base_channels: int = 64
    channel_multipliers: tuple[int, ...] = (1, 2, 4)
    input_channels: int = IMAGE_CHANNELS + FUSION_CHANNELS
    time_embed_dim: int = 128
    brightness_embed_dim: int = 32
    cond_dropout_prob: float = 0.1

    def __post_init__(self):
        if self.input_channels != IMAGE_CHANNELS + FUSION_CHANNELS:
            raise ValueError(
                f"input_channels must be {IMAGE_CHANNELS + FUSION_CHANNELS} "
                f"(image + fusion), got {self.input_channels}"
            )
        if len(self.channel_multipliers) < 2:
            raise ValueError("need at least 2 channel multipliers")
        if not 0.0 <= self.cond_dropout_prob <= 1.0:
            raise ValueError(f"cond_dropout_prob outside [0, 1]: {self.cond_dropout_prob}")

    @property
    def downsample_factor(self) -> int:
        return 2 ** (len(self.channel_multipliers) - 1)


def _groups(channels: int) -> int:
    return math.gcd(8, channels)


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Standard sin/cos position embedding of a (B,) timestep tensor."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=t.dtype, device=t.device) / (half - 1)
    )
    args = t[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    if dim % 2 == 1:
        emb = F.pad(emb, (0, 1))
    return emb


class FiLM(nn.Module):
    """Per-channel scale and shift driven by a conditioning vector."""

    def __init__(self, cond_dim: int, channels: int):
        super().__init__()
        self.proj = nn.Linear(cond_dim, 2 * channels)

    def forward(self, x, h):
        gamma, beta = self.proj(h)[:, :, None, None].chunk(2, dim=1)
        return x * (1.0 + gamma) + beta


class ResidualBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, cond_dim: int):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.norm1 = nn.GroupNorm(_groups(c_out), c_out)
        self.norm2 = nn.GroupNorm(_groups(c_out), c_out)
        self.film1 = FiLM(cond_dim, c_out)
        self.film2 = FiLM(cond_dim, c_out)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x, h):
        res = self.skip(x)
        x = F.silu(self.film1(self.norm1(self.conv1(x)), h))
        x = F.silu(self.film2(self.norm2(self.conv2(x)), h))
        return x + res


class SelfAttention2d(nn.Module):
    """Single-head self-attention over spatial positions."""

    def __init__(self, channels: int):
        super().__init__()
        self.norm = nn.GroupNorm(_groups(channels), channels)
        self.qkv = nn.Conv2d(channels, 3 * channels, 1)
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        b, c, height, width = x.shape
        q, k, v = self.qkv(self.norm(x)).reshape(b, 3, c, height * width).unbind(1)
        attn = torch.softmax(q.transpose(1, 2) @ k / math.sqrt(c), dim=-1)
        out = (v @ attn.transpose(1, 2)).reshape(b, c, height, width)
        return x + self.proj(out)


class NoisePredictor(nn.Module):
    """U-Net estimating the noise component of x_t, conditioned on (t, F, brightness)."""

    def __init__(self, config: DenoiserConfig | None = None):
        super().__init__()
        self.config = config or DenoiserConfig()
        cfg = self.config
        cond_dim = cfg.time_embed_dim + cfg.brightness_embed_dim
        channels = [cfg.base_channels * m for m in cfg.channel_multipliers]

        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.time_embed_dim, cfg.time_embed_dim), nn.SiLU(),
            nn.Linear(cfg.time_embed_dim, cfg.time_embed_dim),
        )
        self.brightness_mlp = nn.Sequential(
            nn.Linear(1, cfg.brightness_embed_dim), nn.SiLU(),
            nn.Linear(cfg.brightness_embed_dim, cfg.brightness_embed_dim),
        )
        self.cond_mlp = nn.Sequential(
            nn.Linear(cond_dim, cond_dim), nn.SiLU(), nn.Linear(cond_dim, cond_dim)
        )

        self.in_conv = nn.Conv2d(cfg.input_channels, channels[0], 3, padding=1)
        self.down_blocks = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        prev = channels[0]
        for i, ch in enumerate(channels):
            self.down_blocks.append(ResidualBlock(prev, ch, cond_dim))
            prev = ch
            if i < len(channels) - 1:
                self.downsamples.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))

        self.mid_block1 = ResidualBlock(channels[-1], channels[-1], cond_dim)
        self.mid_attn = SelfAttention2d(channels[-1])
        self.mid_block2 = ResidualBlock(channels[-1], channels[-1], cond_dim)

        self.up_blocks = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        prev = channels[-1]
        for i in reversed(range(len(channels))):
            out_ch = channels[max(i - 1, 0)]
            self.up_blocks.append(ResidualBlock(prev + channels[i], out_ch, cond_dim))
            prev = out_ch
            if i > 0:
                self.upsamples.append(nn.Conv2d(out_ch, out_ch, 3, padding=1))

        self.out_norm = nn.GroupNorm(_groups(channels[0]), channels[0])
        self.out_conv = nn.Conv2d(channels[0], IMAGE_CHANNELS, 3, padding=1)
        # Zero-init the output so the initial noise estimate is zero.
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

    def forward(
        self,
        x_t: torch.Tensor,
        t: torch.Tensor,
        cond: torch.Tensor | None,
        brightness: torch.Tensor,
    ) -> torch.Tensor:
        if cond is None:
            cond = torch.zeros(
                x_t.shape[0], FUSION_CHANNELS, x_t.shape[2], x_t.shape[3],
                dtype=x_t.dtype, device=x_t.device,
            )
        factor = self.config.downsample_factor
        if x_t.shape[2] % factor or x_t.shape[3] % factor:
            raise ValueError(
                f"spatial dims {tuple(x_t.shape[2:])} must be divisible by {factor}"
            )

        temb = self.time_mlp(sinusoidal_embedding(t.to(x_t.dtype), self.config.time_embed_dim))
        bemb = self.brightness_mlp(brightness.to(x_t.dtype)[:, None])
        h = self.cond_mlp(torch.cat([temb, bemb], dim=1))

        x = self.in_conv(torch.cat([x_t, cond], dim=1))
        skips = []
        for i, block in enumerate(self.down_blocks):
            x = block(x, h)
            skips.append(x)
            if i < len(self.downsamples):
                x = self.downsamples[i](x)

        x = self.mid_block1(x, h)
        x = self.mid_attn(x)
        x = self.mid_block2(x, h)

        for i, block in enumerate(self.up_blocks):
            x = block(torch.cat([x, skips.pop()], dim=1), h)
            if i < len(self.upsamples):
                x = F.interpolate(x, scale_factor=2, mode="nearest")
                x = self.upsamples[i](x)

        return self.out_conv(F.silu(self.out_norm(x)))


def _as_batch(x: torch.Tensor, ndim_single: int, name: str) -> tuple[torch.Tensor, bool]:
    if x.ndim == ndim_single:
        return x[None], True
    if x.ndim == ndim_single + 1:
        return x, False
    raise ValueError(f"{name} must have {ndim_single} or {ndim_single + 1} dims, got {x.ndim}")


def predict_noise(
    model: NoisePredictor,
    x_t: torch.Tensor,
    t,
    cond: torch.Tensor | None,
    brightness,
    rng: np.random.Generator | None = None,
) -> torch.Tensor:
    """Run the noise predictor with argument normalization and cond dropout.

    x_t is (B,3,H,W) or (3,H,W); cond is (B,4,H,W), (4,H,W) or None (the
    unconditional branch; a zero map is substituted). t and brightness may
    be Python scalars or (B,) tensors. In training mode each sample's fusion
    map is zeroed with probability config.cond_dropout_prob, drawn from rng.
    """
    x_t, squeeze = _as_batch(x_t, 3, "x_t")
    batch = x_t.shape[0]
    if x_t.shape[1] != IMAGE_CHANNELS:
        raise ValueError(f"x_t must have {IMAGE_CHANNELS} channels, got {x_t.shape[1]}")

    if cond is not None:
        cond, _ = _as_batch(cond, 3, "cond")
        if cond.shape[0] == 1 and batch > 1:
            cond = cond.expand(batch, -1, -1, -1)
        if cond.shape[1] != FUSION_CHANNELS:
            raise ValueError(f"cond must have {FUSION_CHANNELS} channels, got {cond.shape[1]}")
        if cond.shape[2:] != x_t.shape[2:] or cond.shape[0] != batch:
            raise ValueError(
                f"cond shape {tuple(cond.shape)} does not match x_t {tuple(x_t.shape)}"
            )

    if not torch.is_tensor(t):
        t = torch.full((batch,), float(t))
    t = t.to(device=x_t.device)
    if not torch.is_tensor(brightness):
        brightness = torch.full((batch,), float(brightness))
    brightness = brightness.to(device=x_t.device)

    prob = model.config.cond_dropout_prob
    if model.training and cond is not None and prob > 0.0:
        if prob >= 1.0:
            cond = None
        else:
            rng = rng if rng is not None else np.random.default_rng()
            keep = torch.from_numpy(rng.random(batch) >= prob).to(x_t.device)
            cond = cond * keep[:, None, None, None].to(cond.dtype)

    out = model(x_t, t, cond, brightness)
    return out[0] if squeeze else out


def brightness_of(image) -> float:
    """Mean BT.601 luma of an HxWx3 [0, 1] image (RawImage or array)."""
    pixels = getattr(image, "pixels", image)
    pixels = np.asarray(pixels, dtype=np.float64)
    r, g, b = LUMA_WEIGHTS
    luma = r * pixels[..., 0] + g * pixels[..., 1] + b * pixels[..., 2]
    return float(luma.mean())
