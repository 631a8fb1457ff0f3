"""Image-quality metrics: full-reference PSNR/SSIM and the no-reference
underwater measures (UIQM and its sharpness component UISM).

All functions take HxWx3 images in [0, 1] (arrays or RawImage). The UIQM
component formulas follow the standard underwater-measure definition:
colorfulness from alpha-trimmed opponent-channel statistics, sharpness from
Sobel-weighted blockwise EME, contrast from blockwise PLIP log-AMEE. Those
constants were calibrated on the 8-bit scale, so inputs are scaled by 255
internally; everything lives in UIQM_PARAMS.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .blockops import block_log_ratio_sum, block_plip_contrast_sum
from .imageops import bt601_luma, list_image_files, load_image
from .losses import structural_similarity

log = logging.getLogger(__name__)

PSNR_CAP_DB = 100.0  # reported for zero-MSE pairs

UIQM_PARAMS = {
    "c_uicm": 0.0282,
    "c_uism": 0.2953,
    "c_uiconm": 3.5753,
    "uicm_mu_coeff": -0.0268,
    "uicm_sigma_coeff": 0.1586,
    "alpha_trim": 0.1,
    "block_size": 8,
    "plip_gamma": 1026.0,
    "uism_channel_weights": (0.299, 0.587, 0.114),
    "pixel_scale": 255.0,
}

METRIC_COLUMNS = ("psnr", "ssim", "uiqm", "uism")


def _pixels_of(image) -> np.ndarray:
    pixels = np.asarray(getattr(image, "pixels", image), dtype=np.float64)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"expected HxWx3 image, got shape {pixels.shape}")
    return pixels


def psnr(pred, ref) -> float:
    """Peak signal-to-noise ratio in dB on the [0, 1] scale, capped at 100."""
    p, r = _pixels_of(pred), _pixels_of(ref)
    if p.shape != r.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {r.shape}")
    mse = float(((p - r) ** 2).mean())
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def ssim_metric(pred, ref) -> float:
    """Structural similarity (the higher the better, 1 for identical images)."""
    p, r = _pixels_of(pred), _pixels_of(ref)
    if p.shape != r.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {r.shape}")
    return float(structural_similarity(p, r))


def _crop_to_blocks(values: np.ndarray, block: int) -> np.ndarray:
    h, w = values.shape[:2]
    if h < block or w < block:
        raise ValueError(f"image {values.shape[:2]} smaller than {block}x{block} blocks")
    return values[: h - h % block, : w - w % block]


def _trimmed_stats(values: np.ndarray, alpha: float) -> tuple[float, float]:
    """Asymmetric alpha-trimmed mean, plus second moment about it over all samples."""
    flat = np.sort(values.reshape(-1))
    k = flat.size
    t_left = math.ceil(alpha * k)
    t_right = math.floor(alpha * k)
    trimmed = flat[t_left : k - t_right]
    mu = float(trimmed.mean())
    var = float(((flat - mu) ** 2).mean())
    return mu, var


def _uicm(img255: np.ndarray) -> float:
    rg = img255[..., 0] - img255[..., 1]
    yb = (img255[..., 0] + img255[..., 1]) / 2.0 - img255[..., 2]
    alpha = UIQM_PARAMS["alpha_trim"]
    mu_rg, var_rg = _trimmed_stats(rg, alpha)
    mu_yb, var_yb = _trimmed_stats(yb, alpha)
    return (
        UIQM_PARAMS["uicm_mu_coeff"] * math.hypot(mu_rg, mu_yb)
        + UIQM_PARAMS["uicm_sigma_coeff"] * math.sqrt(var_rg + var_yb)
    )


def _eme(values: np.ndarray, block: int) -> float:
    total, count = block_log_ratio_sum(_crop_to_blocks(values, block), block)
    return 2.0 / count * total


def _uism(img255: np.ndarray) -> float:
    block = UIQM_PARAMS["block_size"]
    result = 0.0
    for channel, weight in zip(range(3), UIQM_PARAMS["uism_channel_weights"]):
        plane = img255[..., channel]
        grad_x = ndimage.sobel(plane, axis=0, mode="reflect")
        grad_y = ndimage.sobel(plane, axis=1, mode="reflect")
        edge_weighted = np.hypot(grad_x, grad_y) * plane
        result += weight * _eme(edge_weighted, block)
    return result


def _uiconm(img255: np.ndarray) -> float:
    block = UIQM_PARAMS["block_size"]
    gamma = UIQM_PARAMS["plip_gamma"]
    luma = _crop_to_blocks(bt601_luma(img255), block)
    total, count = block_plip_contrast_sum(luma, block, gamma)
    w = 1.0 / count
    return gamma - gamma * (1.0 - total / gamma) ** w


def uiqm_components(img) -> dict[str, float]:
    """UIQM and its colorfulness/sharpness/contrast components."""
    img255 = _pixels_of(img) * UIQM_PARAMS["pixel_scale"]
    uicm = _uicm(img255)
    uism_value = _uism(img255)
    uiconm = _uiconm(img255)
    combined = (
        UIQM_PARAMS["c_uicm"] * uicm
        + UIQM_PARAMS["c_uism"] * uism_value
        + UIQM_PARAMS["c_uiconm"] * uiconm
    )
    return {"uicm": uicm, "uism": uism_value, "uiconm": uiconm, "uiqm": combined}


def uiqm(img) -> float:
    """No-reference underwater quality measure (colorfulness+sharpness+contrast)."""
    return uiqm_components(img)["uiqm"]


def uism(img) -> float:
    """No-reference sharpness: Sobel-weighted blockwise EME per channel."""
    img255 = _pixels_of(img) * UIQM_PARAMS["pixel_scale"]
    return _uism(img255)


@dataclass
class MetricReport:
    """Per-image metric rows plus their column means and any per-file errors."""

    per_image: dict[str, dict[str, float]]
    aggregate: dict[str, float]
    errors: list[str] = field(default_factory=list)


def aggregate_of(per_image: dict[str, dict[str, float]]) -> dict[str, float]:
    """Column means over every image that carries the column."""
    sums: dict[str, list[float]] = {}
    for row in per_image.values():
        for name, value in row.items():
            sums.setdefault(name, []).append(value)
    return {name: float(np.mean(values)) for name, values in sums.items()}


def evaluate_dir(pred_dir: str | Path, ref_dir: str | Path | None = None) -> MetricReport:
    """Score every image in pred_dir; add PSNR/SSIM when ref_dir is given.

    Reference images are matched by identical filename. A missing or
    unusable counterpart lands in the report's error list and contributes
    nothing to the full-reference aggregates (no-reference metrics are still
    computed for the image).
    """
    files = list_image_files(pred_dir)
    if not files:
        raise ValueError(f"no images found in {pred_dir}")
    ref_dir = Path(ref_dir) if ref_dir is not None else None
    per_image: dict[str, dict[str, float]] = {}
    errors: list[str] = []
    for path in files:
        pred = load_image(path)
        row = {"uiqm": uiqm(pred), "uism": uism(pred)}
        if ref_dir is not None:
            ref_path = ref_dir / path.name
            if not ref_path.is_file():
                errors.append(f"{path.name}: no reference counterpart in {ref_dir}")
            else:
                ref = load_image(ref_path)
                if ref.shape != pred.shape:
                    errors.append(
                        f"{path.name}: size mismatch {pred.shape[:2]} vs {ref.shape[:2]}"
                    )
                else:
                    row["psnr"] = psnr(pred, ref)
                    row["ssim"] = ssim_metric(pred, ref)
        per_image[path.stem] = row
    return MetricReport(per_image=per_image, aggregate=aggregate_of(per_image), errors=errors)


def write_report(report: MetricReport, out_base: str | Path) -> tuple[Path, Path]:
    """Serialize a report as {base}.json and {base}.csv; returns both paths."""
    base = Path(out_base)
    if base.suffix in {".json", ".csv"}:
        base = base.with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    json_path = base.with_suffix(".json")
    csv_path = base.with_suffix(".csv")
    payload = {
        "per_image": report.per_image,
        "aggregate": report.aggregate,
        "errors": report.errors,
    }
    json_path.write_text(json.dumps(payload, indent=2) + "\n")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("source_id",) + METRIC_COLUMNS)
        for source_id, row in report.per_image.items():
            writer.writerow(
                [source_id] + [row.get(col, "") for col in METRIC_COLUMNS]
            )
    return json_path, csv_path
