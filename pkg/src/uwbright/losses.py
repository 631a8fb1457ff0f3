"""Training objective: the simple noise-matching term plus a five-term
weighted composite (perceptual, structural, MSE, brightness, angular color),
with the brightness and color terms activated only after a staging epoch.

Loss functions accept torch tensors in NCHW ((B,3,H,W) or (3,H,W)) or numpy
arrays in HWC layout; values come back as 0-dim torch tensors so they can be
both backpropagated and logged (float() works on them).
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterable, Mapping

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .imageops import LUMA_WEIGHTS

STAGE_SWITCH_EPOCH = 20

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2

COLOR_NORM_EPS = 1e-6  # pixels with either vector shorter than this contribute 0
LPIPS_MIN_SIZE = 32

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


def _to_chw(x, name: str = "input") -> torch.Tensor:
    """Normalize an image argument to a (B,C,H,W) tensor, preserving dtype."""
    if isinstance(x, np.ndarray):
        t = torch.from_numpy(np.ascontiguousarray(x))
        if t.ndim == 3:
            t = t.permute(2, 0, 1)
        elif t.ndim == 4:
            t = t.permute(0, 3, 1, 2)
        else:
            raise ValueError(f"{name}: expected 3 or 4 dims, got {t.ndim}")
        x = t
    if not torch.is_tensor(x):
        raise TypeError(f"{name}: expected tensor or ndarray, got {type(x)!r}")
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4:
        raise ValueError(f"{name}: expected 3 or 4 dims, got {x.ndim}")
    return x


def _paired(pred, target, channels: int | None = 3) -> tuple[torch.Tensor, torch.Tensor]:
    p = _to_chw(pred, "pred")
    t = _to_chw(target, "target")
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: pred {tuple(p.shape)} vs target {tuple(t.shape)}")
    if channels is not None and p.shape[1] != channels:
        raise ValueError(f"expected {channels}-channel images, got {p.shape[1]}")
    return p, t


def simple_loss(eps_true, eps_hat) -> torch.Tensor:
    """Mean squared error between the true and the estimated noise."""
    a, b = _paired(eps_true, eps_hat, channels=None)
    return ((a - b) ** 2).mean()


def mse_loss(pred, target) -> torch.Tensor:
    """Mean squared error over all pixels and channels."""
    p, t = _paired(pred, target, channels=None)
    return ((p - t) ** 2).mean()


def brightness_loss(pred, target) -> torch.Tensor:
    """Mean absolute difference between the BT.601 luma images."""
    p, t = _paired(pred, target)
    r, g, b = LUMA_WEIGHTS
    luma_p = r * p[:, 0] + g * p[:, 1] + b * p[:, 2]
    luma_t = r * t[:, 0] + g * t[:, 1] + b * t[:, 2]
    return (luma_p - luma_t).abs().mean()


def color_loss(pred, target) -> torch.Tensor:
    """Mean per-pixel angle between RGB vectors, in radians.

    Pixels where either vector has norm below COLOR_NORM_EPS contribute zero
    (the angle is undefined there). The angle arccos(<p,q>/(|p||q|)) is
    evaluated in the cancellation-free form 2*atan2(|u-v|, |u+v|) on the unit
    vectors, which is exactly zero for parallel inputs and has finite
    gradients everywhere.
    """
    p, t = _paired(pred, target)
    norm_p = (p * p).sum(dim=1, keepdim=True).sqrt()
    norm_t = (t * t).sum(dim=1, keepdim=True).sqrt()
    valid = (norm_p[:, 0] > COLOR_NORM_EPS) & (norm_t[:, 0] > COLOR_NORM_EPS)
    u = p / norm_p.clamp(min=COLOR_NORM_EPS)
    v = t / norm_t.clamp(min=COLOR_NORM_EPS)
    # 1e-20 regularizer keeps sqrt's gradient finite at identical pixels
    diff = ((u - v) ** 2).sum(dim=1).add(1e-20).sqrt()
    summed = ((u + v) ** 2).sum(dim=1).add(1e-20).sqrt()
    angle = 2.0 * torch.atan2(diff, summed)
    return torch.where(valid, angle, torch.zeros_like(angle)).mean()


def _gaussian_window(size: int, sigma: float, dtype, device) -> torch.Tensor:
    coords = torch.arange(size, dtype=dtype, device=device) - size // 2
    g = torch.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = torch.outer(g, g)
    return kernel / kernel.sum()


def structural_similarity(pred, target, window_size: int = SSIM_WINDOW,
                          sigma: float = SSIM_SIGMA) -> torch.Tensor:
    """Mean SSIM between two images ([0,1] range constants, Gaussian window).

    Shared core for both the training loss and the evaluation metric.
    """
    p, t = _paired(pred, target, channels=None)
    if p.shape[2] < window_size or p.shape[3] < window_size:
        raise ValueError(
            f"image {tuple(p.shape[2:])} smaller than the {window_size}x{window_size} window"
        )
    channels = p.shape[1]
    kernel = _gaussian_window(window_size, sigma, p.dtype, p.device)
    kernel = kernel.expand(channels, 1, window_size, window_size).contiguous()

    def blur(x):
        return F.conv2d(x, kernel, groups=channels)

    mu_p, mu_t = blur(p), blur(t)
    var_p = blur(p * p) - mu_p * mu_p
    var_t = blur(t * t) - mu_t * mu_t
    cov = blur(p * t) - mu_p * mu_t
    num = (2.0 * mu_p * mu_t + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_p * mu_p + mu_t * mu_t + SSIM_C1) * (var_p + var_t + SSIM_C2)
    return (num / den).mean()


def ssim_loss(pred, target) -> torch.Tensor:
    """1 - SSIM, so that identical images give zero and lower is better."""
    return 1.0 - structural_similarity(pred, target)


class FeatureExtractor(nn.Module):
    """Five-stage convolutional feature extractor for the perceptual loss.

    Mirrors the classic AlexNet feature stack with taps after each ReLU.
    `pretrained()` loads ImageNet weights (needs torchvision weight files);
    `seeded()` is the deterministic offline fallback with identical topology.
    """

    def __init__(self):
        super().__init__()
        self.stages = nn.ModuleList([
            nn.Sequential(nn.Conv2d(3, 64, 11, stride=4, padding=2), nn.ReLU()),
            nn.Sequential(nn.MaxPool2d(3, 2), nn.Conv2d(64, 192, 5, padding=2), nn.ReLU()),
            nn.Sequential(nn.MaxPool2d(3, 2), nn.Conv2d(192, 384, 3, padding=1), nn.ReLU()),
            nn.Sequential(nn.Conv2d(384, 256, 3, padding=1), nn.ReLU()),
            nn.Sequential(nn.Conv2d(256, 256, 3, padding=1), nn.ReLU()),
        ])
        mean = torch.tensor(_IMAGENET_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(_IMAGENET_STD).view(1, 3, 1, 1)
        self.register_buffer("mean", mean)
        self.register_buffer("std", std)
        self.requires_grad_(False)
        self.eval()

    @classmethod
    def seeded(cls, seed: int = 0) -> "FeatureExtractor":
        """Deterministic randomly-initialized extractor (no downloads)."""
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            return cls()

    @classmethod
    def pretrained(cls) -> "FeatureExtractor":
        """ImageNet-pretrained extractor; raises if weights cannot be fetched."""
        try:
            from torchvision.models import AlexNet_Weights, alexnet

            source = alexnet(weights=AlexNet_Weights.IMAGENET1K_V1).features
        except Exception as exc:
            raise RuntimeError(
                "pretrained feature extractor unavailable (weight download failed); "
                "use FeatureExtractor.seeded() as the offline fallback"
            ) from exc
        model = cls()
        convs = [m for m in source if isinstance(m, nn.Conv2d)]
        ours = [m for stage in model.stages for m in stage if isinstance(m, nn.Conv2d)]
        for src, dst in zip(convs, ours):
            dst.weight.copy_(src.weight)
            dst.bias.copy_(src.bias)
        return model

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        x = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        features = []
        for stage in self.stages:
            x = stage(x)
            features.append(x)
        return features


def lpips_loss(pred, target, extractor: FeatureExtractor) -> torch.Tensor:
    """Perceptual distance: squared diffs of unit-normalized features.

    Per stage, features are L2-normalized along channels, the squared
    difference is summed over channels and averaged over the spatial grid;
    stages are summed with unit weights.
    """
    if extractor is None:
        raise RuntimeError(
            "no feature extractor supplied; use FeatureExtractor.pretrained() "
            "or the offline FeatureExtractor.seeded() fallback"
        )
    p, t = _paired(pred, target)
    if p.shape[2] < LPIPS_MIN_SIZE or p.shape[3] < LPIPS_MIN_SIZE:
        raise ValueError(
            f"images {tuple(p.shape[2:])} too small for the extractor "
            f"(need >= {LPIPS_MIN_SIZE}x{LPIPS_MIN_SIZE})"
        )
    total = None
    for fp, ft in zip(extractor(p), extractor(t)):
        np_ = fp / (fp.pow(2).sum(dim=1, keepdim=True).sqrt() + 1e-10)
        nt_ = ft / (ft.pow(2).sum(dim=1, keepdim=True).sqrt() + 1e-10)
        d = (np_ - nt_).pow(2).sum(dim=1).mean(dim=(1, 2))
        total = d if total is None else total + d
    return total.mean()


@dataclass(frozen=True)
class LossWeights:
    """Composite-term weights; defaults are the published values."""

    lpips: float = 30.0
    ssim: float = 2.83
    mse: float = 1.0
    brightness: float = 20.0
    color: float = 100.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"weight {f.name} must be nonnegative")

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class LossReport:
    """Weighted total plus unweighted per-term values (0-dim tensors)."""

    total: torch.Tensor
    per_term: dict[str, torch.Tensor]
    active_terms: frozenset[str]

    @property
    def total_value(self) -> float:
        return float(self.total)

    def scalars(self) -> dict[str, float]:
        return {name: float(value) for name, value in self.per_term.items()}


def weighted_total(per_term: Mapping, weights: LossWeights, active: Iterable[str]):
    """Sum weight * term over the active terms (terms without a weight use 1)."""
    wmap = weights.as_dict()
    total = None
    for name in sorted(active):
        contribution = wmap.get(name, 1.0) * per_term[name]
        total = contribution if total is None else total + contribution
    if total is None:
        raise ValueError("no active terms")
    return total


def active_terms_for_epoch(epoch: int, stage_switch_epoch: int = STAGE_SWITCH_EPOCH) -> frozenset[str]:
    """LPIPS/SSIM/MSE from the start; brightness and color join later."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    terms = {"lpips", "ssim", "mse"}
    if epoch >= stage_switch_epoch:
        terms |= {"brightness", "color"}
    return frozenset(terms)


def composite_loss(
    x0_hat,
    reference,
    epoch: int,
    weights: LossWeights | None = None,
    extractor: FeatureExtractor | None = None,
    stage_switch_epoch: int = STAGE_SWITCH_EPOCH,
) -> LossReport:
    """Weighted sum of the active image-space terms for this epoch."""
    weights = weights or LossWeights()
    active = active_terms_for_epoch(epoch, stage_switch_epoch)
    term_fns = {
        "lpips": lambda: lpips_loss(x0_hat, reference, extractor),
        "ssim": lambda: ssim_loss(x0_hat, reference),
        "mse": lambda: mse_loss(x0_hat, reference),
        "brightness": lambda: brightness_loss(x0_hat, reference),
        "color": lambda: color_loss(x0_hat, reference),
    }
    per_term = {name: term_fns[name]() for name in sorted(active)}
    return LossReport(
        total=weighted_total(per_term, weights, active),
        per_term=per_term,
        active_terms=active,
    )
