"""edmkit: fBm trajectory ensembles, Euclidean distance matrix completion,
diffusion inpainting, and chromatin distance-map imputation."""

from . import (complete, containers, diffusion, edm, fbm, fish,  # noqa: F401
               metrics, rigidity)

__version__ = "0.1.0"
