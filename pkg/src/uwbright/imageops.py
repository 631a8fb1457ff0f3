"""Shared low-level image helpers: luma, Gaussian blur, file IO, resizing."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

log = logging.getLogger(__name__)

# BT.601 luma weights, used everywhere a grayscale reduction is needed.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp"}


def bt601_luma(pixels: np.ndarray) -> np.ndarray:
    """Reduce an HxWx3 array to HxW luma using BT.601 weights."""
    if pixels.ndim != 3 or pixels.shape[-1] != 3:
        raise ValueError(f"expected HxWx3 array, got shape {pixels.shape}")
    r, g, b = LUMA_WEIGHTS
    return r * pixels[..., 0] + g * pixels[..., 1] + b * pixels[..., 2]


def gaussian_kernel_2d(size: int, sigma: float) -> np.ndarray:
    """Normalized size x size Gaussian kernel sampled on an integer grid."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    half = size // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    kernel_1d = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(kernel_1d, kernel_1d)
    return kernel / kernel.sum()


def gaussian_blur(image: np.ndarray, size: int = 5, sigma: float = 1.5) -> np.ndarray:
    """Blur a 2D array with a size x size Gaussian, reflect padding at borders."""
    kernel = gaussian_kernel_2d(size, sigma)
    return ndimage.correlate(np.asarray(image, dtype=np.float64), kernel, mode="reflect")


def load_image(path: str | Path) -> np.ndarray:
    """Load an image file as HxWx3 float32 RGB in [0, 1]."""
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return np.asarray(rgb, dtype=np.float32) / 255.0


def save_image(pixels: np.ndarray, path: str | Path) -> None:
    """Write an HxWx3 [0, 1] array as an 8-bit image file."""
    arr = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)


def resize_bilinear(pixels: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of an HxWx3 [0, 1] array, returned as float32.

    Channels are resized in float to avoid an 8-bit quantization round trip.
    """
    arr = np.asarray(pixels, dtype=np.float32)
    channels = [
        np.asarray(
            Image.fromarray(arr[..., c], mode="F").resize((width, height), Image.BILINEAR),
            dtype=np.float32,
        )
        for c in range(arr.shape[-1])
    ]
    return np.clip(np.stack(channels, axis=-1), 0.0, 1.0)


def list_image_files(directory: str | Path) -> list[Path]:
    """Image files in a directory, lexicographic by filename."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(
        p for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )
