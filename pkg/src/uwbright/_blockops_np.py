"""Vectorized numpy implementation of the blockwise metric scans.

Pure-Python fallback for the compiled extension in _blockops.pyx; both must
return identical values (up to float summation order).
"""

from __future__ import annotations

import numpy as np


def _block_extrema(values: np.ndarray, block: int) -> tuple[np.ndarray, np.ndarray]:
    h, w = values.shape
    if block < 1 or h % block or w % block:
        raise ValueError(f"array {values.shape} not tileable by {block}x{block} blocks")
    tiles = values.reshape(h // block, block, w // block, block)
    return tiles.max(axis=(1, 3)), tiles.min(axis=(1, 3))


def block_log_ratio_sum(values: np.ndarray, block: int) -> tuple[float, int]:
    """Sum of log(max/min) over block tiles, and the tile count.

    Tiles with zero minimum contribute 0 (zero-contrast tiles give log(1)=0).
    """
    values = np.asarray(values, dtype=np.float64)
    mx, mn = _block_extrema(values, block)
    valid = mn > 0.0
    total = float(np.log(mx[valid] / mn[valid]).sum())
    return total, mx.size


def block_plip_contrast_sum(values: np.ndarray, block: int, gamma: float) -> tuple[float, int]:
    """Sum of m*log(m) over block tiles with PLIP Michelson contrast m.

    m = plip_sub(max, min) / plip_sum(max, min); tiles with zero contrast or
    a vanishing denominator contribute 0. Returns the sum and the tile count.
    """
    values = np.asarray(values, dtype=np.float64)
    mx, mn = _block_extrema(values, block)
    top = gamma * (mx - mn) / (gamma - mn)
    bottom = mx + mn - mx * mn / gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(bottom > 0.0, top / bottom, 0.0)
        contrib = np.where(m > 0.0, m * np.log(np.where(m > 0.0, m, 1.0)), 0.0)
    return float(contrib.sum()), mx.size
