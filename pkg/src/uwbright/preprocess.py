"""Turns unpaired raw underwater images into training triples.

Each raw image yields a synthetic brightness pair (a brightened reference and
a darkened input) plus a 4-channel conditioning map built from the dark image:
three per-channel max-normalized color channels and one blurred/residual SNR
channel, concatenated.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imageops import (
    bt601_luma,
    gaussian_blur,
    list_image_files,
    load_image,
    resize_bilinear,
)

log = logging.getLogger(__name__)

SHIFT_RANGE = (50, 100)  # inclusive, on the 0-255 scale

# Defaults for the SNR map; exposed so configs can override them.
SNR_KERNEL_SIZE = 5
SNR_SIGMA = 1.5
SNR_EPS = 1e-6

TRIPLE_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.jsonl"


@dataclass(frozen=True)
class RawImage:
    """An RGB image with float32 pixels in [0, 1], shaped HxWx3."""

    pixels: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must be HxWx3, got shape {px.shape}")
        if px.shape[0] < 8 or px.shape[1] < 8:
            raise ValueError(f"image must be at least 8x8, got {px.shape[:2]}")
        if not np.isfinite(px).all():
            raise ValueError("pixels contain non-finite values")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixels must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class BrightnessPair:
    """A darkened/brightened pair synthesized from one raw image."""

    low: RawImage
    high: RawImage
    shift_high: int
    shift_low: int

    def __post_init__(self):
        lo, hi = SHIFT_RANGE
        for name, shift in (("shift_high", self.shift_high), ("shift_low", self.shift_low)):
            if not lo <= shift <= hi:
                raise ValueError(f"{name} must be in [{lo}, {hi}], got {shift}")
        if self.low.pixels.shape != self.high.pixels.shape:
            raise ValueError("low/high shapes differ")
        if self.low.source_id != self.high.source_id:
            raise ValueError("low/high source ids differ")


@dataclass(frozen=True)
class ColorMap:
    """Per-channel max-normalized image, HxWx3 in [0, 1]."""

    values: np.ndarray


@dataclass(frozen=True)
class SNRMap:
    """Blur-to-residual ratio map, HxWx1, finite and nonnegative."""

    values: np.ndarray


@dataclass(frozen=True)
class FusionMap:
    """Conditioning map: color map channels 0-2, clamped SNR map channel 3."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[2] != 4:
            raise ValueError(f"fusion map must be HxWx4, got shape {self.values.shape}")


@dataclass(frozen=True)
class TrainingTriple:
    """One preprocessed sample: dark input, bright reference, conditioning map."""

    low: RawImage
    high: RawImage
    fusion: FusionMap
    shift_high: int
    shift_low: int
    seed: int = 0

    @property
    def source_id(self) -> str:
        return self.low.source_id


def apply_brightness_shift(raw: RawImage, shift_high: int, shift_low: int) -> BrightnessPair:
    """Build the brightness pair for known shift magnitudes (0-255 scale)."""
    px = raw.pixels.astype(np.float32)
    high = np.clip(px + np.float32(shift_high / 255.0), 0.0, 1.0)
    low = np.clip(px - np.float32(shift_low / 255.0), 0.0, 1.0)
    return BrightnessPair(
        low=RawImage(low, raw.source_id),
        high=RawImage(high, raw.source_id),
        shift_high=shift_high,
        shift_low=shift_low,
    )


def adjust_brightness(raw: RawImage, rng_seed: int) -> BrightnessPair:
    """Draw integer shifts uniformly from [50, 100] and apply them.

    shift_high is added, shift_low subtracted, both divided by 255; results
    are clipped to [0, 1]. Deterministic for a given seed (high drawn first).
    """
    rng = np.random.default_rng(rng_seed)
    lo, hi = SHIFT_RANGE
    shift_high = int(rng.integers(lo, hi + 1))
    shift_low = int(rng.integers(lo, hi + 1))
    return apply_brightness_shift(raw, shift_high, shift_low)


def color_map(low: RawImage) -> ColorMap:
    """Divide each channel by its own maximum; all-zero channels stay zero."""
    px = low.pixels.astype(np.float64)
    maxima = px.max(axis=(0, 1))
    scale = np.where(maxima > 0.0, maxima, 1.0)
    return ColorMap(px / scale)


def snr_map(
    low: RawImage,
    kernel_size: int = SNR_KERNEL_SIZE,
    sigma: float = SNR_SIGMA,
    eps: float = SNR_EPS,
) -> SNRMap:
    """Ratio of the blurred luma to its absolute high-frequency residual.

    map = blur(gray) / (|gray - blur(gray)| + eps), computed on BT.601 luma
    with a reflect-padded Gaussian. eps keeps the denominator positive, so
    the output is finite and nonnegative everywhere.
    """
    gray = bt601_luma(low.pixels.astype(np.float64))
    blurred = gaussian_blur(gray, size=kernel_size, sigma=sigma)
    values = blurred / (np.abs(gray - blurred) + eps)
    return SNRMap(values[..., np.newaxis])


def fuse(c: ColorMap, n: SNRMap) -> FusionMap:
    """Concatenate the color map with the [0, 1]-clamped SNR map."""
    if c.values.shape[:2] != n.values.shape[:2]:
        raise ValueError(
            f"color/SNR spatial dims differ: {c.values.shape[:2]} vs {n.values.shape[:2]}"
        )
    snr = np.clip(n.values, 0.0, 1.0)
    stacked = np.concatenate([c.values, snr], axis=2)
    return FusionMap(stacked.astype(np.float32))


def make_triple(raw: RawImage, rng_seed: int) -> TrainingTriple:
    """Full per-image preprocessing: brightness pair plus fusion map of the low image."""
    pair = adjust_brightness(raw, rng_seed)
    fusion = fuse(color_map(pair.low), snr_map(pair.low))
    return TrainingTriple(
        low=pair.low,
        high=pair.high,
        fusion=fusion,
        shift_high=pair.shift_high,
        shift_low=pair.shift_low,
        seed=rng_seed,
    )


def _image_seed(rng_seed: int, index: int) -> int:
    # One independent stream per image, stable under the lexicographic ordering.
    return int(np.random.SeedSequence([rng_seed, index]).generate_state(1)[0])


def build_training_set(
    image_dir: str | Path, rng_seed: int, image_size: int
) -> list[TrainingTriple]:
    """Preprocess every decodable image in a directory into training triples.

    Images are taken in lexicographic filename order, resized to
    image_size x image_size RGB in [0, 1], then run through the brightness /
    color / SNR / fusion steps. Undecodable files are skipped with a warning;
    an empty directory or all files undecodable is an error.
    """
    files = list_image_files(image_dir)
    if not files:
        raise ValueError(f"no image files found in {image_dir}")
    triples = []
    for index, path in enumerate(files):
        try:
            pixels = load_image(path)
        except Exception as exc:  # undecodable file, not a caller bug
            log.warning("skipping undecodable image %s: %s", path.name, exc)
            continue
        resized = resize_bilinear(pixels, image_size, image_size)
        raw = RawImage(resized, source_id=path.stem)
        triples.append(make_triple(raw, _image_seed(rng_seed, index)))
    if not triples:
        raise ValueError(f"all {len(files)} image files in {image_dir} were undecodable")
    return triples


def save_triples(triples: list[TrainingTriple], out_dir: str | Path) -> Path:
    """Write one .npz container per triple plus a JSON-lines manifest.

    Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / MANIFEST_NAME
    with open(manifest_path, "w") as manifest:
        for triple in triples:
            fname = f"{triple.source_id}.npz"
            np.savez(
                out_dir / fname,
                format_version=np.int64(TRIPLE_FORMAT_VERSION),
                source_id=np.str_(triple.source_id),
                low=triple.low.pixels,
                high=triple.high.pixels,
                fusion=triple.fusion.values,
                shift_high=np.int64(triple.shift_high),
                shift_low=np.int64(triple.shift_low),
                seed=np.int64(triple.seed),
            )
            record = {
                "source_id": triple.source_id,
                "shift_high": triple.shift_high,
                "shift_low": triple.shift_low,
                "path": fname,
            }
            manifest.write(json.dumps(record) + "\n")
    return manifest_path


def load_triples(triple_dir: str | Path) -> list[TrainingTriple]:
    """Read back triples written by save_triples, in manifest order."""
    triple_dir = Path(triple_dir)
    manifest_path = triple_dir / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {triple_dir}")
    triples = []
    with open(manifest_path) as manifest:
        for line in manifest:
            record = json.loads(line)
            with np.load(triple_dir / record["path"]) as data:
                version = int(data["format_version"])
                if version != TRIPLE_FORMAT_VERSION:
                    raise ValueError(
                        f"unsupported triple format version {version} in {record['path']}"
                    )
                source_id = str(data["source_id"])
                triples.append(
                    TrainingTriple(
                        low=RawImage(data["low"], source_id),
                        high=RawImage(data["high"], source_id),
                        fusion=FusionMap(data["fusion"]),
                        shift_high=int(data["shift_high"]),
                        shift_low=int(data["shift_low"]),
                        seed=int(data["seed"]),
                    )
                )
    return triples
