"""DDPM noise schedule and forward noising.

Cosine alpha-bar schedule on a T-step grid with linear interpolation for
continuous timesteps in (0, 1). Noising uses the standard
reparameterization  z_t = sqrt(abar_t) z + sqrt(1 - abar_t) eps.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COSINE_S = 0.008
ABAR_FLOOR = 1e-5


@dataclass(frozen=True)
class NoiseSchedule:
    """Monotone decreasing alpha-bar over a uniform grid t = k/T, k=1..T."""

    steps: int = 1000

    def __post_init__(self):
        t = np.arange(1, self.steps + 1) / self.steps
        object.__setattr__(self, "alpha_bar_grid", self._cosine(t))

    @staticmethod
    def _cosine(t: np.ndarray) -> np.ndarray:
        f = np.cos((t + COSINE_S) / (1 + COSINE_S) * np.pi / 2) ** 2
        f0 = np.cos(COSINE_S / (1 + COSINE_S) * np.pi / 2) ** 2
        return np.clip(f / f0, ABAR_FLOOR, 1 - ABAR_FLOOR)

    def alpha_bar(self, t) -> np.ndarray:
        """Continuous alpha-bar via linear interpolation on the grid."""
        t = np.asarray(t, dtype=np.float64)
        if np.any(t <= 0) or np.any(t >= 1):
            raise ValueError(f"timestep must lie in (0, 1), got {t}")
        grid_t = np.arange(1, self.steps + 1) / self.steps
        return np.interp(t, grid_t, self.alpha_bar_grid)


@dataclass(frozen=True)
class NoisedSample:
    """One forward-noising draw: everything needed to reproduce z_t."""

    clean: np.ndarray
    noise: np.ndarray
    t: float
    alpha_bar: float
    weight: float = 1.0  # w(t); constant by default, recorded in manifests

    def noised(self) -> np.ndarray:
        return (np.sqrt(self.alpha_bar) * self.clean
                + np.sqrt(1 - self.alpha_bar) * self.noise)


def add_noise(clean: np.ndarray, noise: np.ndarray, t: float,
              schedule: NoiseSchedule) -> np.ndarray:
    """z_t = sqrt(abar_t) z + sqrt(1 - abar_t) eps."""
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if clean.shape != noise.shape:
        raise ValueError(f"shape mismatch: {clean.shape} vs {noise.shape}")
    ab = float(schedule.alpha_bar(t))
    return np.sqrt(ab) * clean + np.sqrt(1 - ab) * noise
