"""Reverse-diffusion samplers: unconditional plus four inpainting variants.

All samplers operate on raw images (n, n) in the model's normalized domain;
`y` is the known-entry image and `mask` the binary known-entry indicator
(1 = known). Batched: `count` chains run vectorized and the draw order is
fixed (init noise for the whole batch, then per reverse step the noises in
algorithm order), so a run is bit-reproducible given (model, schedule, seed).
Every inpainter returns images that equal y on known entries exactly, because
the final step is deterministic there.

Samplers:
  ddpm_sample     ancestral sampling, x_{t-1} = (x_t - eps_hat beta/sqrt(1-ab))
                  / sqrt(alpha) + sigma z
  ddpm_inpaint    ancestral steps with the known block replaced by the
                  forward-noised data at every step
  repaint_inpaint ddpm_inpaint plus `resamples` inner passes per step, jumping
                  back one level by forward noising between passes (resamples=1
                  reduces to ddpm_inpaint with an identical draw sequence)
  ddrm_inpaint    variance-exploding basis update with three per-entry branches
                  (unknown; known still noisier than the observation; known
                  at or below the observation noise)
  ddnm_inpaint    posterior step on the range-space-corrected x0 estimate,
                  optionally with time travel (every travel_length levels,
                  re-noise back up and repeat `repeats` times)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracle import EpsilonPredictor
from .schedules import NoiseSchedule

__all__ = [
    "SamplerConfig", "ddpm_sample", "ddpm_inpaint", "repaint_inpaint",
    "ddrm_inpaint", "ddnm_inpaint",
]


@dataclass
class SamplerConfig:
    steps: int = 200          # subsampled chain length used by pipelines
    eta: float = 0.85         # ddrm mixing weight
    sigma_y: float = 0.0      # ddrm observation noise
    resamples: int = 10       # repaint inner passes
    travel_length: int = 3    # ddnm time-travel block length
    repeats: int = 3          # ddnm passes per block
    sigma_mode: str = "beta"


def _gen(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def _check_inpaint_args(y, mask):
    y = np.asarray(y, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if y.shape != mask.shape:
        raise ValueError(f"y shape {y.shape} != mask shape {mask.shape}")
    if not np.isin(mask, (0.0, 1.0)).all():
        raise ValueError("mask entries must be 0 or 1")
    return y, mask


def _reverse_step(x, eps_hat, s: NoiseSchedule, i: int, z):
    """One ancestral step from level i+1 to level i (0-based position i)."""
    coef = s.betas[i] / np.sqrt(1.0 - s.alpha_bars[i])
    mean = (x - coef * eps_hat) / np.sqrt(s.alphas[i])
    return mean + s.sigmas[i] * z


def ddpm_sample(model: EpsilonPredictor, s: NoiseSchedule, count: int, seed: int) -> np.ndarray:
    """Draw `count` unconditional samples, shape (count, n, n)."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    gen = _gen(seed)
    n = model.n
    x = gen.standard_normal((count, n, n))
    for i in range(len(s) - 1, -1, -1):
        eps_hat = model.evaluate(x, int(s.timesteps[i]))
        z = gen.standard_normal(x.shape) if i > 0 else 0.0
        x = _reverse_step(x, eps_hat, s, i, z)
    return x


def ddpm_inpaint(model: EpsilonPredictor, s: NoiseSchedule, y, mask,
                 count: int = 1, seed: int = 0) -> np.ndarray:
    """Projection inpainting: after every ancestral step, the known block is
    replaced by the data forward-noised to the same level."""
    y, mask = _check_inpaint_args(y, mask)
    gen = _gen(seed)
    x = gen.standard_normal((count,) + y.shape)
    for i in range(len(s) - 1, -1, -1):
        if i > 0:
            eps1 = gen.standard_normal(x.shape)
            eps2 = gen.standard_normal(x.shape)
        else:
            eps1 = eps2 = 0.0
        y_noised = np.sqrt(s.alpha_bar_prev[i]) * y + np.sqrt(1.0 - s.alpha_bar_prev[i]) * eps1
        eps_hat = model.evaluate(x, int(s.timesteps[i]))
        x = _reverse_step(x, eps_hat, s, i, eps2)
        x = mask * y_noised + (1.0 - mask) * x
    return x


def repaint_inpaint(model: EpsilonPredictor, s: NoiseSchedule, y, mask,
                    resamples: int = 10, count: int = 1, seed: int = 0) -> np.ndarray:
    """Projection inpainting with resampling: each level is solved `resamples`
    times, jumping back one level by forward noising between passes. The jump
    reuses the pass's reverse-step noise."""
    if resamples < 1:
        raise ValueError(f"resamples must be >= 1, got {resamples}")
    y, mask = _check_inpaint_args(y, mask)
    gen = _gen(seed)
    x = gen.standard_normal((count,) + y.shape)
    for i in range(len(s) - 1, -1, -1):
        for r in range(resamples):
            if i > 0:
                eps1 = gen.standard_normal(x.shape)
                eps2 = gen.standard_normal(x.shape)
            else:
                eps1 = eps2 = 0.0
            y_noised = np.sqrt(s.alpha_bar_prev[i]) * y + np.sqrt(1.0 - s.alpha_bar_prev[i]) * eps1
            eps_hat = model.evaluate(x, int(s.timesteps[i]))
            x_prev = _reverse_step(x, eps_hat, s, i, eps2)
            x_prev = mask * y_noised + (1.0 - mask) * x_prev
            if i > 0 and r != resamples - 1:
                x = np.sqrt(1.0 - s.betas[i]) * x_prev + np.sqrt(s.betas[i]) * eps2
            else:
                x = x_prev
    return x


def ddrm_inpaint(model: EpsilonPredictor, s: NoiseSchedule, y, mask,
                 eta: float = 0.85, sigma_y: float = 0.0,
                 count: int = 1, seed: int = 0) -> np.ndarray:
    """Inpainting in the variance-exploding basis. For a selection mask the
    degradation SVD is trivial (singular value 1 at known entries, 0 at
    unknown), so the three branches act entrywise."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    if sigma_y < 0:
        raise ValueError(f"sigma_y must be >= 0, got {sigma_y}")
    y, mask = _check_inpaint_args(y, mask)
    known = mask.astype(bool)
    gen = _gen(seed)
    x = gen.standard_normal((count,) + y.shape)
    sig_ve = np.sqrt((1.0 - s.alpha_bars) / s.alpha_bars)
    sig_ve_prev = np.sqrt((1.0 - s.alpha_bar_prev) / s.alpha_bar_prev)
    for i in range(len(s) - 1, -1, -1):
        eps_hat = model.evaluate(x, int(s.timesteps[i]))
        sq_ab = np.sqrt(s.alpha_bars[i])
        x0 = (x - np.sqrt(1.0 - s.alpha_bars[i]) * eps_hat) / sq_ab
        xbar = x / sq_ab
        eps = gen.standard_normal(x.shape) if i > 0 else 0.0
        st, sp = sig_ve[i], sig_ve_prev[i]
        # unknown entries: drift toward x0 along the current residual
        upd = x0 + np.sqrt(1.0 - eta * eta) * sp * (xbar - x0) / st + eta * sp * eps
        if sp < sigma_y:
            # observation noisier than the current level: drift toward y
            upd_known = x0 + np.sqrt(1.0 - eta * eta) * sp * (y - x0) / sigma_y + eta * sp * eps
        else:
            upd_known = y + np.sqrt(sp * sp - sigma_y * sigma_y) * (eps if i > 0 else 0.0)
        out = np.where(known, upd_known, upd)
        x = np.sqrt(s.alpha_bar_prev[i]) * out
    return x


def ddnm_inpaint(model: EpsilonPredictor, s: NoiseSchedule, y, mask,
                 travel_length: int = 3, repeats: int = 3,
                 count: int = 1, seed: int = 0) -> np.ndarray:
    """Null-space inpainting: the x0 estimate is corrected to agree with the
    data on known entries, then a posterior step mixes it with x_t.

    Time travel: the chain is processed in blocks of `travel_length` levels;
    each block runs `repeats` times, re-noising from the block's bottom level
    back to its top level between passes. travel_length=1, repeats=1 is the
    plain chain.
    """
    if travel_length < 1 or repeats < 1:
        raise ValueError("travel_length and repeats must be >= 1")
    y, mask = _check_inpaint_args(y, mask)
    gen = _gen(seed)
    x = gen.standard_normal((count,) + y.shape)
    L = len(s)

    def step(x, i):
        eps_hat = model.evaluate(x, int(s.timesteps[i]))
        ab, abp = s.alpha_bars[i], s.alpha_bar_prev[i]
        x0 = (x - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)
        x0_hat = mask * y + (1.0 - mask) * x0
        if i == 0:
            return x0_hat    # algebraic limit of the posterior mean at the last step
        z = gen.standard_normal(x.shape)
        c0 = np.sqrt(abp) * s.betas[i] / (1.0 - ab)
        ct = np.sqrt(s.alphas[i]) * (1.0 - abp) / (1.0 - ab)
        return c0 * x0_hat + ct * x + s.sigmas[i] * z

    top = L - 1
    while top >= 0:
        bottom = max(top - travel_length + 1, 0)
        for r in range(repeats):
            xi = x
            for i in range(top, bottom - 1, -1):
                xi = step(xi, i)
            if r != repeats - 1:
                # forward-noise from level `bottom` back to level `top+1`'s input,
                # i.e. to the marginal at level top (the state consumed by step top)
                ab_hi = s.alpha_bars[top]
                ab_lo = s.alpha_bar_prev[bottom]
                ratio = ab_hi / ab_lo
                x = np.sqrt(ratio) * xi + np.sqrt(1.0 - ratio) * gen.standard_normal(xi.shape)
            else:
                x = xi
        top = bottom - 1
    return x
