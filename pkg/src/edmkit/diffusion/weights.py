"""Epsilon-predictor weight files: load, save, and output postprocessing.

A weight file is an EPSW container (see containers). Its manifest carries:

    architecture:  {"name": "unet-small-v1", "base_channels", "groups",
                    "temb_dim", "n"}
    schedule:      {"T", "betas"}  -- the full training chain
    normalization: {"mu", "sigma", "hurst", "n"}
    check_vectors: [{"input", "t", "output"}, ...]
    tensors:       name/shape/dtype/offset table (written by save_epsw)

Loading rebuilds the network, the schedule, and the normalization, then
replays every recorded check vector and refuses the file on mismatch, so a
weight file that loads is known to produce the exporter's outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..containers import ContainerError, load_epsw, save_epsw
from ..edm import DistanceMatrix
from .oracle import EpsilonPredictor
from .schedules import NoiseSchedule
from .unet import UNetSmall

__all__ = ["NormalizationSpec", "UNetPredictor", "load_predictor",
           "save_predictor", "postprocess_edm"]

CHECK_TOL = 1e-4


@dataclass
class NormalizationSpec:
    """Affine map between matrix entries and the network's input domain."""

    mu: float
    sigma: float
    hurst: float | None = None
    n: int | None = None

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def normalize(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mu) / self.sigma

    def denormalize(self, x):
        return np.asarray(x, dtype=np.float64) * self.sigma + self.mu

    def to_dict(self) -> dict:
        return {"mu": float(self.mu), "sigma": float(self.sigma),
                "hurst": self.hurst, "n": self.n}


class UNetPredictor(EpsilonPredictor):
    """EpsilonPredictor backed by the numpy UNet and a trained schedule."""

    def __init__(self, net: UNetSmall, schedule: NoiseSchedule,
                 normalization: NormalizationSpec, manifest: dict | None = None):
        self.net = net
        self.schedule = schedule
        self.normalization = normalization
        self.manifest = manifest or {}
        self.n = net.n

    def evaluate(self, x: np.ndarray, t: int) -> np.ndarray:
        t = int(t)
        if not 1 <= t <= int(self.schedule.timesteps[-1]):
            raise ValueError(f"timestep {t} outside trained chain "
                             f"1..{int(self.schedule.timesteps[-1])}")
        return self.net.forward(x, t)


def save_predictor(path, tensors: dict, schedule: NoiseSchedule,
                   normalization: NormalizationSpec, n: int,
                   base_channels: int = 32, groups: int = 8,
                   temb_dim: int | None = None,
                   check_vectors: list | None = None,
                   check_count: int = 8, check_seed: int = 0,
                   training: dict | None = None) -> None:
    """Write an EPSW weight file.

    When check_vectors is omitted, `check_count` (input, t, output) triples
    are generated here with seeded noise images and the network itself, so
    every exported file self-certifies on load. `training`, when given, is
    stored verbatim under manifest["training"] (seed, environment, dataset
    provenance); loaders ignore it.
    """
    if (np.asarray(schedule.timesteps) != np.arange(1, len(schedule) + 1)).any():
        raise ValueError("weight files must record the full training schedule")
    # certify what the file will actually hold: tensors round-trip through f32
    stored = {k: np.asarray(v, dtype=np.float32).astype(np.float64)
              for k, v in tensors.items()}
    net = UNetSmall(stored, n=n, base_channels=base_channels, groups=groups,
                    temb_dim=temb_dim)
    if check_vectors is None:
        rng = np.random.default_rng(check_seed)
        ts = np.linspace(1, len(schedule), max(1, check_count)).round().astype(int)
        check_vectors = []
        for t in ts:
            x = rng.standard_normal((n, n))
            check_vectors.append({"input": x.tolist(), "t": int(t),
                                  "output": net.forward(x, int(t)).tolist()})
    manifest = {
        "architecture": {"name": "unet-small-v1", "base_channels": base_channels,
                         "groups": groups, "temb_dim": temb_dim or 4 * base_channels,
                         "n": n},
        "schedule": {"T": len(schedule), "betas": [float(b) for b in schedule.betas]},
        "normalization": normalization.to_dict(),
        "check_vectors": check_vectors,
    }
    if training is not None:
        manifest["training"] = training
    save_epsw(path, manifest, tensors)


def load_predictor(path, n: int | None = None) -> UNetPredictor:
    """Load and verify a weight file; refuses files whose check vectors fail."""
    manifest, tensors = load_epsw(path)
    arch = manifest.get("architecture")
    if not arch or arch.get("name") != "unet-small-v1":
        raise ContainerError(f"unsupported architecture "
                             f"{arch.get('name') if arch else None!r}")
    n_model = int(arch["n"])
    if n is not None and n != n_model:
        raise ContainerError(f"weights are for n={n_model}, requested n={n}")
    sched_doc = manifest.get("schedule") or {}
    betas = np.asarray(sched_doc.get("betas", []), dtype=np.float64)
    if betas.size == 0 or betas.size != int(sched_doc.get("T", -1)):
        raise ContainerError("manifest schedule is missing or inconsistent")
    schedule = NoiseSchedule(betas=betas, timesteps=np.arange(1, betas.size + 1))
    norm_doc = manifest.get("normalization") or {}
    try:
        normalization = NormalizationSpec(mu=float(norm_doc["mu"]),
                                          sigma=float(norm_doc["sigma"]),
                                          hurst=norm_doc.get("hurst"),
                                          n=norm_doc.get("n"))
    except KeyError as e:
        raise ContainerError(f"manifest normalization is missing {e}") from e
    try:
        net = UNetSmall(tensors, n=n_model,
                        base_channels=int(arch.get("base_channels", 32)),
                        groups=int(arch.get("groups", 8)),
                        temb_dim=arch.get("temb_dim"))
    except ValueError as e:
        raise ContainerError(f"tensor table is inconsistent: {e}") from e
    checks = manifest.get("check_vectors") or []
    if not checks:
        raise ContainerError("weight file has no check vectors")
    for i, cv in enumerate(checks):
        got = net.forward(np.asarray(cv["input"], dtype=np.float64), int(cv["t"]))
        err = float(np.abs(got - np.asarray(cv["output"], dtype=np.float64)).max())
        if err > CHECK_TOL:
            raise ContainerError(f"check vector {i} mismatch: max error {err:.3g} "
                                 f"exceeds {CHECK_TOL}")
    return UNetPredictor(net=net, schedule=schedule, normalization=normalization,
                         manifest=manifest)


def postprocess_edm(raw: np.ndarray, normalization: NormalizationSpec):
    """Sanitize one generated image into a DistanceMatrix.

    Denormalizes, symmetrizes, zeroes the diagonal, clips negatives, and
    reports how much correction that took: {"max_asymmetry", "max_clipped"}.
    """
    x = normalization.denormalize(np.asarray(raw, dtype=np.float64))
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("non-finite entries in generated matrix")
    max_asym = float(np.abs(x - x.T).max())
    sym = (x + x.T) / 2.0
    np.fill_diagonal(sym, 0.0)
    max_clip = float(max(0.0, -sym.min()))
    out = np.clip(sym, 0.0, None)
    report = {"max_asymmetry": max_asym, "max_clipped": max_clip}
    return DistanceMatrix(values=out, squared=True), report
