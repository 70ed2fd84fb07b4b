"""Noise-predictor training: denoising objective, export, verification.

The objective is the standard simplified denoising loss: draw a clean
matrix x0, a uniform timestep t, and Gaussian noise eps; the network sees
x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps and is penalized by
mean squared error against eps. The exported weight file records the full
training schedule, the normalization statistics of the training split, the
seed and environment, and torch-computed check vectors that the consumer
replays before accepting the file.
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from edmkit.diffusion.schedules import linear_schedule
from edmkit.diffusion.weights import NormalizationSpec, save_predictor

from .data import load_training_batch, normalization_stats
from .model import TorchUNetSmall

__all__ = ["TrainConfig", "TrainResult", "train", "make_check_vectors"]


@dataclass
class TrainConfig:
    dataset: str | Path
    out: str | Path
    epochs: int = 100
    batch_size: int = 128
    lr: float = 3e-4
    t_count: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    base_channels: int = 32
    groups: int = 8
    temb_dim: int | None = None
    seed: int = 0
    device: str = "cpu"
    check_count: int = 8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.check_count < 8:
            raise ValueError(f"need at least 8 check vectors, got {self.check_count}")


@dataclass
class TrainResult:
    path: Path
    history: list[float]            # mean loss per epoch
    normalization: NormalizationSpec
    config: TrainConfig = field(repr=False)

    @property
    def loss_drop(self) -> float:
        """Relative loss decrease from the first epoch to the last."""
        return 1.0 - self.history[-1] / self.history[0]


def make_check_vectors(model: TorchUNetSmall, t_max: int, count: int,
                       seed: int = 0) -> list[dict]:
    """Torch-computed (input, t, output) triples for load verification.

    Runs a float64 copy of the model so the recorded outputs match a
    float64 replay of the stored float32 tensors to roundoff, well inside
    the consumer's acceptance tolerance.
    """
    probe = copy.deepcopy(model).double().eval()
    rng = np.random.default_rng(seed)
    ts = np.linspace(1, t_max, count).round().astype(int)
    vectors = []
    with torch.no_grad():
        for t in ts:
            x = rng.standard_normal((model.n, model.n))
            out = probe(torch.from_numpy(x)[None], int(t))[0].numpy()
            vectors.append({"input": x.tolist(), "t": int(t),
                            "output": out.tolist()})
    return vectors


def train(cfg: TrainConfig, log=None) -> TrainResult:
    """Fit the predictor on an EDMD dataset and export a weight file.

    Aborts with RuntimeError the moment the loss stops being finite.
    `log`, when given, receives one line per epoch.
    """
    values, hurst, n = load_training_batch(cfg.dataset)
    mu, sigma = normalization_stats(values)
    normalization = NormalizationSpec(mu=mu, sigma=sigma, hurst=hurst, n=n)

    schedule = linear_schedule(cfg.t_count, cfg.beta_start, cfg.beta_end)
    device = torch.device(cfg.device)
    torch.manual_seed(cfg.seed)
    model = TorchUNetSmall(n, base_channels=cfg.base_channels,
                           groups=cfg.groups, temb_dim=cfg.temb_dim).to(device)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    x0_all = torch.from_numpy((values - mu) / sigma).to(torch.float32)
    ab = torch.from_numpy(schedule.alpha_bars).to(torch.float32).to(device)
    gen = torch.Generator().manual_seed(cfg.seed)

    history = []
    for epoch in range(cfg.epochs):
        order = torch.randperm(x0_all.shape[0], generator=gen)
        losses = []
        for lo in range(0, x0_all.shape[0], cfg.batch_size):
            x0 = x0_all[order[lo:lo + cfg.batch_size]].to(device)
            b = x0.shape[0]
            t = torch.randint(1, cfg.t_count + 1, (b,), generator=gen).to(device)
            eps = torch.randn(x0.shape, generator=gen).to(device)
            a = ab[t - 1][:, None, None]
            x_t = torch.sqrt(a) * x0 + torch.sqrt(1.0 - a) * eps
            pred = model(x_t, t)
            loss = torch.mean((pred - eps) ** 2)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"training diverged: non-finite loss at epoch {epoch + 1}, "
                    f"batch {lo // cfg.batch_size + 1} (lr={cfg.lr}, "
                    f"seed={cfg.seed})")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        history.append(float(np.mean(losses)))
        if log:
            log(f"epoch {epoch + 1}/{cfg.epochs}: loss {history[-1]:.6f}")

    model = model.cpu().eval()
    vectors = make_check_vectors(model, cfg.t_count, cfg.check_count,
                                 seed=cfg.seed)
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_predictor(
        out, model.export_tensors(), schedule, normalization, n=n,
        base_channels=cfg.base_channels, groups=cfg.groups,
        temb_dim=cfg.temb_dim, check_vectors=vectors,
        training={
            "seed": cfg.seed,
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "lr": cfg.lr,
            "dataset": str(cfg.dataset),
            "dataset_size": int(values.shape[0]),
            "final_loss": history[-1],
            "environment": {
                "torch": torch.__version__,
                "python": sys.version.split()[0],
                "device": cfg.device,
            },
        })
    return TrainResult(path=out, history=history,
                       normalization=normalization, config=cfg)
