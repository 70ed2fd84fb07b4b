"""Analytic epsilon predictor for Gaussian image ensembles.

For x0 ~ N(m, S) and x_t = sqrt(ab) x0 + sqrt(1-ab) eps, the posterior mean is

    E[x0 | x_t] = m + sqrt(ab) S (ab S + (1-ab) I)^{-1} (x_t - sqrt(ab) m)

and the implied noise estimate is

    eps_hat = (x_t - sqrt(ab) E[x0 | x_t]) / sqrt(1 - ab).

This is the exact minimum-MSE predictor, so samplers driven by it can be
checked against closed-form Gaussian conditioning without training anything.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .schedules import NoiseSchedule

__all__ = ["EpsilonPredictor", "GaussianEnsembleSpec", "AnalyticEpsilon"]


class EpsilonPredictor:
    """Interface: evaluate(x, t) estimates the forward noise in x at original-
    chain timestep t (1-based). x is one image (n, n) or a batch (B, n, n)."""

    n: int

    def evaluate(self, x: np.ndarray, t: int) -> np.ndarray:
        raise NotImplementedError


@dataclass
class GaussianEnsembleSpec:
    mean: np.ndarray      # (d,)
    cov: np.ndarray       # (d, d)
    shape: tuple          # image shape, d = prod(shape)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).ravel()
        self.cov = np.asarray(self.cov, dtype=np.float64)
        d = self.mean.size
        if self.cov.shape != (d, d):
            raise ValueError(f"cov shape {self.cov.shape} incompatible with mean length {d}")
        if int(np.prod(self.shape)) != d:
            raise ValueError(f"shape {self.shape} incompatible with dimension {d}")
        if np.max(np.abs(self.cov - self.cov.T)) > 1e-10 * max(1.0, np.abs(self.cov).max()):
            raise ValueError("cov must be symmetric")

    @classmethod
    def from_images(cls, images) -> "GaussianEnsembleSpec":
        """Fit (mean, cov) to an image ensemble (count, n, n) or (count, d)."""
        x = np.asarray(images, dtype=np.float64)
        shape = x.shape[1:]
        flat = x.reshape(x.shape[0], -1)
        return cls(mean=flat.mean(axis=0), cov=np.cov(flat, rowvar=False), shape=tuple(shape))


class AnalyticEpsilon(EpsilonPredictor):
    """Exact epsilon predictor for a Gaussian ensemble under a full schedule.

    Factorizations of (ab S + (1-ab) I) are cached lazily per timestep behind
    a lock, so one instance can serve concurrent samplers.
    """

    def __init__(self, spec: GaussianEnsembleSpec, schedule: NoiseSchedule):
        self.spec = spec
        self.schedule = schedule
        self.n = spec.shape[0]
        self._cache: dict = {}
        self._lock = threading.Lock()

    def _factor(self, t: int):
        with self._lock:
            hit = self._cache.get(t)
        if hit is not None:
            return hit
        pos = int(np.searchsorted(self.schedule.timesteps, t))
        if pos >= len(self.schedule) or self.schedule.timesteps[pos] != t:
            raise ValueError(f"timestep {t} is not in the schedule")
        ab = self.schedule.alpha_bars[pos]
        d = self.spec.mean.size
        mat = ab * self.spec.cov + (1.0 - ab) * np.eye(d)
        entry = (ab, cho_factor(mat))
        with self._lock:
            self._cache[t] = entry
        return entry

    def evaluate(self, x: np.ndarray, t: int) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == len(self.spec.shape)
        flat = x.reshape(1, -1) if single else x.reshape(x.shape[0], -1)
        ab, factor = self._factor(int(t))
        sq = np.sqrt(ab)
        resid = flat - sq * self.spec.mean[None, :]
        solved = cho_solve(factor, resid.T).T
        x0_mean = self.spec.mean[None, :] + sq * solved @ self.spec.cov.T
        eps = (flat - sq * x0_mean) / np.sqrt(1.0 - ab)
        return eps.reshape(x.shape)
