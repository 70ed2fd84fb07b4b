"""Diffusion stack: noise schedules, epsilon predictors, and samplers."""

from . import oracle, samplers, schedules, unet, weights
from .oracle import AnalyticEpsilon, EpsilonPredictor, GaussianEnsembleSpec
from .samplers import (ddnm_inpaint, ddpm_inpaint, ddpm_sample, ddrm_inpaint,
                       repaint_inpaint)
from .schedules import NoiseSchedule, forward_noise, linear_schedule, uniform_indices
from .weights import (NormalizationSpec, UNetPredictor, load_predictor,
                      postprocess_edm, save_predictor)

__all__ = [
    "oracle", "samplers", "schedules", "unet", "weights",
    "AnalyticEpsilon", "EpsilonPredictor", "GaussianEnsembleSpec",
    "ddnm_inpaint", "ddpm_inpaint", "ddpm_sample", "ddrm_inpaint",
    "repaint_inpaint",
    "NoiseSchedule", "forward_noise", "linear_schedule", "uniform_indices",
    "NormalizationSpec", "UNetPredictor", "load_predictor", "postprocess_edm",
    "save_predictor",
]
