"""Independent straight-line reference implementations used as test oracles.

Everything here is deliberately naive (explicit loops, no shared code with
the package) so the tests check the implementation against a second route.
"""

from __future__ import annotations

import math

import numpy as np

LUMA = (0.299, 0.587, 0.114)


def reflect_index(i: int, n: int) -> int:
    """Symmetric reflection with edge repeat: (dcba | abcd | dcba)."""
    while i < 0 or i >= n:
        if i < 0:
            i = -i - 1
        if i >= n:
            i = 2 * n - 1 - i
    return i


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    kernel = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            kernel[i, j] = math.exp(-((i - half) ** 2 + (j - half) ** 2) / (2 * sigma**2))
    return kernel / kernel.sum()


def direct_gaussian_blur(image: np.ndarray, size: int = 5, sigma: float = 1.5) -> np.ndarray:
    """Direct double-loop convolution with reflect padding."""
    kernel = gaussian_kernel(size, sigma)
    half = size // 2
    h, w = image.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-half, half + 1):
                for dx in range(-half, half + 1):
                    yy = reflect_index(y + dy, h)
                    xx = reflect_index(x + dx, w)
                    acc += kernel[dy + half, dx + half] * image[yy, xx]
            out[y, x] = acc
    return out


def luma(image: np.ndarray) -> np.ndarray:
    return LUMA[0] * image[..., 0] + LUMA[1] * image[..., 1] + LUMA[2] * image[..., 2]


def snr_map_direct(pixels: np.ndarray, size: int = 5, sigma: float = 1.5,
                   eps: float = 1e-6) -> np.ndarray:
    gray = luma(pixels.astype(np.float64))
    blurred = direct_gaussian_blur(gray, size, sigma)
    return blurred / (np.abs(gray - blurred) + eps)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    total = 0.0
    af, bf = a.reshape(-1), b.reshape(-1)
    for x, y in zip(af, bf):
        total += (float(x) - float(y)) ** 2
    return total / af.size


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    m = mse(a, b)
    if m == 0.0:
        return 100.0
    return 10.0 * math.log10(1.0 / m)


def mean_abs_luma_diff(a: np.ndarray, b: np.ndarray) -> float:
    la, lb = luma(a.astype(np.float64)), luma(b.astype(np.float64))
    return float(np.abs(la - lb).mean())


def ssim_direct(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5,
                c1: float = 0.01**2, c2: float = 0.03**2) -> float:
    """Sliding-window SSIM on HxWxC arrays, valid positions only."""
    kernel = gaussian_kernel(window, sigma)
    h, w, channels = a.shape
    values = []
    for c in range(channels):
        pa, pb = a[..., c].astype(np.float64), b[..., c].astype(np.float64)
        for y in range(h - window + 1):
            for x in range(w - window + 1):
                wa = pa[y : y + window, x : x + window]
                wb = pb[y : y + window, x : x + window]
                mu_a = (kernel * wa).sum()
                mu_b = (kernel * wb).sum()
                var_a = (kernel * wa * wa).sum() - mu_a**2
                var_b = (kernel * wb * wb).sum() - mu_b**2
                cov = (kernel * wa * wb).sum() - mu_a * mu_b
                num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
                den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
                values.append(num / den)
    return float(np.mean(values))


def alpha_bar_product(betas) -> float:
    """Plain-python running product of (1 - beta)."""
    product = 1.0
    for beta in betas:
        product *= 1.0 - float(beta)
    return product


def block_eme_direct(values: np.ndarray, block: int) -> float:
    """Loop-based EME: (2 / nblocks) * sum log(max/min), zero-min blocks skipped."""
    h = values.shape[0] - values.shape[0] % block
    w = values.shape[1] - values.shape[1] % block
    total, count = 0.0, 0
    for y in range(0, h, block):
        for x in range(0, w, block):
            tile = values[y : y + block, x : x + block]
            lo, hi = float(tile.min()), float(tile.max())
            if lo > 0.0:
                total += math.log(hi / lo)
            count += 1
    return 2.0 / count * total


def block_logamee_direct(values: np.ndarray, block: int, gamma: float = 1026.0) -> float:
    """Loop-based PLIP log-AMEE with zero-contrast blocks contributing 0."""
    h = values.shape[0] - values.shape[0] % block
    w = values.shape[1] - values.shape[1] % block
    total, count = 0.0, 0
    for y in range(0, h, block):
        for x in range(0, w, block):
            tile = values[y : y + block, x : x + block]
            lo, hi = float(tile.min()), float(tile.max())
            top = gamma * (hi - lo) / (gamma - lo)
            bottom = hi + lo - hi * lo / gamma
            if bottom > 0.0:
                m = top / bottom
                if m > 0.0:
                    total += m * math.log(m)
            count += 1
    return gamma - gamma * (1.0 - total / gamma) ** (1.0 / count)
