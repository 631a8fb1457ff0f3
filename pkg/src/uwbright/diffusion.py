"""Noise schedule and diffusion-process math, independent of any denoiser.

All operations take an explicit scalar timestep and explicit noise, so they
are pure and work unchanged on numpy arrays and torch tensors (coefficients
are plain Python floats).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02
DEFAULT_DDIM_STEPS = 50


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear beta schedule with derived alpha and cumulative-alpha arrays.

    betas[i] is the variance increment for timestep t = i + 1; t = 0 means
    clean data, where the cumulative alpha is defined to be 1.
    """

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def beta(self, t: int) -> float:
        self._check_step(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self._check_step(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        if t == 0:
            return 1.0
        self._check_step(t)
        return float(self.alpha_bars[t - 1])

    def _check_step(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [1, {self.T}]")


def make_schedule(
    T: int = DEFAULT_T,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Linear beta interpolation from beta_start to beta_end over T steps."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not 0.0 < beta_start < beta_end < 1.0:
        raise ValueError(
            f"need 0 < beta_start < beta_end < 1, got ({beta_start}, {beta_end})"
        )
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(T=T, betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def forward_step(x_prev, t: int, sched: NoiseSchedule, noise):
    """One forward noising step: sqrt(1 - beta_t) * x_prev + sqrt(beta_t) * noise."""
    beta = sched.beta(t)
    return math.sqrt(1.0 - beta) * x_prev + math.sqrt(beta) * noise


def sample_xt(x0, t: int, sched: NoiseSchedule, noise):
    """Closed-form jump to timestep t: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * noise."""
    abar = sched.alpha_bar(t)
    return math.sqrt(abar) * x0 + math.sqrt(1.0 - abar) * noise


def posterior_mean(x_t, t: int, eps_hat, sched: NoiseSchedule):
    """Mean of the learned reverse step given a noise estimate.

    (1/sqrt(alpha_t)) * (x_t - beta_t / sqrt(1 - abar_t) * eps_hat); t = 0 has
    no reverse step.
    """
    if t < 1:
        raise ValueError("no reverse step from t=0")
    alpha = sched.alpha(t)
    beta = sched.beta(t)
    abar = sched.alpha_bar(t)
    return (x_t - beta / math.sqrt(1.0 - abar) * eps_hat) / math.sqrt(alpha)


def predict_x0(x_t, t: int, eps_hat, sched: NoiseSchedule):
    """Invert the closed-form jump: (x_t - sqrt(1 - abar_t) * eps_hat) / sqrt(abar_t)."""
    abar = sched.alpha_bar(t)
    if abar <= 0.0:
        raise ValueError(f"alpha_bar({t}) is not positive")
    return (x_t - math.sqrt(1.0 - abar) * eps_hat) / math.sqrt(abar)


def ddim_step(x_t, t: int, t_prev: int, eps_hat, sched: NoiseSchedule):
    """Deterministic sampler update from timestep t down to t_prev.

    sqrt(abar_{t_prev}) * predicted_x0 + sqrt(1 - abar_{t_prev}) * eps_hat.
    """
    if not 0 <= t_prev < t <= sched.T:
        raise ValueError(f"need 0 <= t_prev < t <= T, got t_prev={t_prev}, t={t}")
    abar_prev = sched.alpha_bar(t_prev)
    x0_hat = predict_x0(x_t, t, eps_hat, sched)
    return math.sqrt(abar_prev) * x0_hat + math.sqrt(1.0 - abar_prev) * eps_hat


def ddim_timesteps(T: int, steps: int) -> list[int]:
    """Evenly spaced decreasing timestep ladder from T to 0, steps+1 entries."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if steps > T:
        raise ValueError(f"steps ({steps}) cannot exceed T ({T})")
    ladder = np.round(np.linspace(T, 0, steps + 1)).astype(int).tolist()
    if any(a <= b for a, b in zip(ladder[:-1], ladder[1:])):
        raise ValueError(f"timestep ladder not strictly decreasing: {ladder}")
    return ladder


def ddim_sample(
    denoiser: Callable,
    cond,
    brightness: float,
    steps: int,
    sched: NoiseSchedule,
    rng_seed: int,
):
    """Generate an image by running the deterministic sampler from seeded noise.

    denoiser(x_t, t, cond, brightness) must return a noise estimate shaped
    like x_t. cond provides the spatial dims (HxWx4 fusion map, or any array
    whose first two axes are H, W); the chain starts from seeded standard
    normal noise at t = T, follows an evenly spaced decreasing ladder of the
    given length, and clamps the final image to [0, 1].
    """
    cond_values = getattr(cond, "values", cond)
    height, width = cond_values.shape[0], cond_values.shape[1]
    rng = np.random.default_rng(rng_seed)
    x = rng.standard_normal((height, width, 3))
    ladder = ddim_timesteps(sched.T, steps)
    for t, t_prev in zip(ladder[:-1], ladder[1:]):
        eps_hat = denoiser(x, t, cond, brightness)
        x = ddim_step(x, t, t_prev, eps_hat, sched)
    return np.clip(x, 0.0, 1.0)
