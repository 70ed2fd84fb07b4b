"""Noise schedules for the diffusion samplers.

A schedule holds per-position arrays over its L steps; position i (0-based)
plays the role of timestep t = i + 1 in the usual 1-based formulas, so
`alpha_bar_prev[0] = 1` exactly. `timesteps[i]` is the 1-based index of the
position in the ORIGINAL training chain; epsilon predictors are always called
with original-chain indices, so a subsampled schedule keeps the model honest.

Subsampling a schedule at original indices S_1 < ... < S_L rebuilds
    beta_i_new = 1 - alpha_bar[S_i] / alpha_bar[S_{i-1}]
(with alpha_bar[S_0] taken as 1), which preserves the cumulative products:
the subsampled alpha_bar equals the original alpha_bar at the kept indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["NoiseSchedule", "linear_schedule", "uniform_indices", "forward_noise"]


@dataclass
class NoiseSchedule:
    betas: np.ndarray
    timesteps: np.ndarray                 # 1-based original-chain indices, ascending
    sigma_mode: str = "beta"              # "beta" (sigma_t^2 = beta_t) or "posterior"
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)
    alpha_bar_prev: np.ndarray = field(init=False)
    sigmas: np.ndarray = field(init=False)

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64)
        self.timesteps = np.asarray(self.timesteps, dtype=np.int64)
        if self.betas.ndim != 1 or self.betas.size == 0:
            raise ValueError("betas must be a non-empty 1-D array")
        if (self.betas <= 0).any() or (self.betas >= 1).any():
            raise ValueError("betas must lie in (0, 1)")
        if self.timesteps.shape != self.betas.shape:
            raise ValueError("timesteps must match betas in length")
        if (np.diff(self.timesteps) <= 0).any():
            raise ValueError("timesteps must be strictly increasing")
        if self.sigma_mode not in ("beta", "posterior"):
            raise ValueError(f"sigma_mode must be 'beta' or 'posterior', got {self.sigma_mode!r}")
        self.alphas = 1.0 - self.betas
        self.alpha_bars = np.cumprod(self.alphas)
        self.alpha_bar_prev = np.concatenate([[1.0], self.alpha_bars[:-1]])
        if self.sigma_mode == "beta":
            sig2 = self.betas
        else:
            sig2 = (1.0 - self.alpha_bar_prev) / (1.0 - self.alpha_bars) * self.betas
        self.sigmas = np.sqrt(sig2)

    def __len__(self):
        return self.betas.size

    @property
    def steps(self) -> int:
        return self.betas.size

    def subsample(self, indices) -> "NoiseSchedule":
        """New schedule over the given 1-based original-chain indices."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("indices must be a non-empty 1-D array")
        if (np.diff(idx) <= 0).any():
            raise ValueError("indices must be strictly increasing")
        if idx[0] < 1 or idx[-1] > self.timesteps[-1]:
            raise ValueError(f"indices must lie in [1, {self.timesteps[-1]}]")
        if len(self) != self.timesteps[-1] or (self.timesteps != np.arange(1, len(self) + 1)).any():
            raise ValueError("can only subsample a full (unsubsampled) schedule")
        ab = self.alpha_bars[idx - 1]
        ab_prev = np.concatenate([[1.0], ab[:-1]])
        betas = 1.0 - ab / ab_prev
        return NoiseSchedule(betas=betas, timesteps=idx, sigma_mode=self.sigma_mode)


def linear_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02,
                    sigma_mode: str = "beta") -> NoiseSchedule:
    """Linearly spaced betas from beta_start to beta_end over T steps."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    betas = np.linspace(beta_start, beta_end, T)
    return NoiseSchedule(betas=betas, timesteps=np.arange(1, T + 1), sigma_mode=sigma_mode)


def uniform_indices(T: int, steps: int) -> np.ndarray:
    """`steps` roughly evenly spaced 1-based indices ending at T."""
    if not 1 <= steps <= T:
        raise ValueError(f"steps must be in [1, {T}], got {steps}")
    return np.unique(np.round(np.linspace(1, T, steps)).astype(np.int64))


def forward_noise(x0, schedule: NoiseSchedule, position: int, eps) -> np.ndarray:
    """x_t = sqrt(alpha_bar) x0 + sqrt(1 - alpha_bar) eps at the given 0-based
    schedule position."""
    ab = schedule.alpha_bars[position]
    return np.sqrt(ab) * np.asarray(x0) + np.sqrt(1.0 - ab) * np.asarray(eps)
