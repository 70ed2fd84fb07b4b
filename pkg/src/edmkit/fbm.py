"""Fractional Brownian motion ensembles via circulant embedding.

A trajectory is `n_points` positions in `dim` dimensions at unit contour
spacing, starting at the origin. Each coordinate is an independent 1-D fBm
with Hurst exponent H, built by cumulative summation of fractional Gaussian
noise synthesized with the Davies-Harte circulant embedding (FFT length
2*(n_points-1)).

Scaling convention: the ensemble mean squared displacement over contour
distance s is  <x^2(s)> = a^2 * s^(2H)  with a = step_scale, so each
coordinate carries variance a^2/dim per unit step. Setting
`unit_coordinate_variance=True` switches to variance a^2 per coordinate
instead (mean squared displacement a^2 * dim * s^(2H)).

Randomness: Philox counter-based streams. Trajectory `i` of a batch draws
only from Philox(key = seed XOR i), so batches can be generated in any order
or degree of parallelism without changing results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .containers import load_trajectory_batch, save_trajectory_batch

__all__ = [
    "FbmParams", "fbm_covariance", "generate_fbm", "increment_autocorrelation",
    "distance_pdf", "save_trajectories", "load_trajectories", "EmbeddingError",
]


class EmbeddingError(ValueError):
    """Circulant embedding produced a significantly negative eigenvalue."""


@dataclass
class FbmParams:
    hurst: float
    n_points: int
    dim: int = 3
    step_scale: float = 1.0
    unit_coordinate_variance: bool = False

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            raise ValueError(f"hurst must be in (0, 1), got {self.hurst}")
        if self.n_points < 2:
            raise ValueError(f"n_points must be >= 2, got {self.n_points}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.step_scale <= 0:
            raise ValueError(f"step_scale must be > 0, got {self.step_scale}")


def fbm_covariance(hurst, s, t):
    """Covariance of unit-scale 1-D fBm:  (t^2H + s^2H - |t-s|^2H) / 2."""
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if (s < 0).any() or (t < 0).any():
        raise ValueError("fBm covariance is defined for non-negative times")
    h2 = 2.0 * hurst
    out = 0.5 * (t ** h2 + s ** h2 - np.abs(t - s) ** h2)
    return out if out.ndim else float(out)


def _fgn_autocovariance(hurst, lags):
    """Autocovariance of unit-variance fGn at integer lags."""
    k = np.abs(np.asarray(lags, dtype=np.float64))
    h2 = 2.0 * hurst
    return 0.5 * ((k + 1) ** h2 + np.abs(k - 1) ** h2 - 2 * k ** h2)


_EIGENVALUE_FLOOR = -1e-10


def _embedding_eigenvalues(hurst, m):
    """Eigenvalues of the 2m-circulant embedding of the fGn covariance.

    Tiny negative values above -1e-10 are clamped to zero; anything below
    raises EmbeddingError naming the offending index.
    """
    c = _fgn_autocovariance(hurst, np.concatenate([np.arange(m + 1), np.arange(m - 1, 0, -1)]))
    lam = np.fft.fft(c).real
    bad = np.flatnonzero(lam < _EIGENVALUE_FLOOR)
    if bad.size:
        i = int(bad[np.argmin(lam[bad])])
        raise EmbeddingError(
            f"circulant embedding eigenvalue {lam[i]:.3e} at index {i} is below "
            f"the {_EIGENVALUE_FLOOR:g} tolerance (hurst={hurst}, n_points={m + 1})")
    return np.clip(lam, 0.0, None)


def _sample_fgn(gen, lam, m, rows):
    """Draw `rows` independent fGn series of length m sharing eigenvalues lam."""
    two_m = 2 * m
    w = gen.standard_normal((rows, two_m))
    v = np.empty((rows, two_m), dtype=np.complex128)
    v[:, 0] = np.sqrt(lam[0]) * w[:, 0]
    v[:, m] = np.sqrt(lam[m]) * w[:, m]
    if m > 1:
        half = np.sqrt(lam[1:m] / 2.0)
        z = half * (w[:, 1:m] + 1j * w[:, m + 1:][:, ::-1])
        v[:, 1:m] = z
        v[:, m + 1:] = np.conj(z)[:, ::-1]
    return np.fft.fft(v, axis=1).real[:, :m] / np.sqrt(two_m)


def generate_fbm(params: FbmParams, count: int, seed: int) -> np.ndarray:
    """Generate `count` fBm trajectories, shape (count, n_points, dim).

    Trajectory i uses its own Philox(seed XOR i) stream; the first point of
    every trajectory is the origin.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    m = params.n_points - 1
    lam = _embedding_eigenvalues(params.hurst, m)
    scale = params.step_scale
    if not params.unit_coordinate_variance:
        scale = scale / np.sqrt(params.dim)
    out = np.empty((count, params.n_points, params.dim))
    for i in range(count):
        gen = np.random.Generator(np.random.Philox(key=np.uint64(seed) ^ np.uint64(i)))
        fgn = _sample_fgn(gen, lam, m, params.dim) * scale
        out[i, 0] = 0.0
        out[i, 1:] = np.cumsum(fgn, axis=1).T
    return out


def increment_autocorrelation(trajectories, lag: int) -> float:
    """Ensemble- and time-averaged increment correlation at integer lag,
    normalized by the lag-0 mean square."""
    x = np.asarray(trajectories, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"expected (count, n_points, dim) array, got shape {x.shape}")
    inc = np.diff(x, axis=1)
    n_inc = inc.shape[1]
    if lag < 0 or lag >= n_inc:
        raise ValueError(f"lag must be in [0, {n_inc - 1}], got {lag}")
    c0 = np.mean(inc * inc)
    if c0 == 0:
        raise ValueError("degenerate trajectories: zero increment variance")
    if lag == 0:
        return 1.0
    ck = np.mean(inc[:, :n_inc - lag] * inc[:, lag:])
    return float(ck / c0)


def distance_pdf(x, s, params: FbmParams):
    """Density of the displacement vector at radius x after contour distance s:

        P(x | s) = (D / (2 pi a^2 s^2H))^(D/2) * exp(-D x^2 / (2 a^2 s^2H))

    with D = params.dim and a = params.step_scale. This is the value of the
    D-dimensional Gaussian density at any point of norm x, not the radial
    density of |x|.
    """
    x = np.asarray(x, dtype=np.float64)
    if (x < 0).any():
        raise ValueError("x is a distance and must be >= 0")
    if s <= 0:
        raise ValueError(f"s must be > 0, got {s}")
    d = params.dim
    var = params.step_scale ** 2 * float(s) ** (2.0 * params.hurst)
    out = (d / (2.0 * np.pi * var)) ** (d / 2.0) * np.exp(-d * x * x / (2.0 * var))
    return out if out.ndim else float(out)


def save_trajectories(path, trajectories, params: FbmParams) -> None:
    save_trajectory_batch(path, trajectories, hurst=params.hurst, step_scale=params.step_scale)


def load_trajectories(path):
    """Load a TRAJ container -> (trajectories, FbmParams)."""
    batch = load_trajectory_batch(path)
    params = FbmParams(hurst=batch.hurst if batch.hurst is not None else 0.5,
                       n_points=batch.values.shape[1], dim=batch.values.shape[2],
                       step_scale=batch.step_scale)
    return batch.values, params
