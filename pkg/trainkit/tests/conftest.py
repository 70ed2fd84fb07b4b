"""Shared fixtures: cached fBm datasets and trained models.

Everything expensive lives in tests/_cache keyed by its build recipe, so
the first run trains for real and later runs just load and re-verify (the
loader replays check vectors every time). Delete _cache to force a full
rebuild.
"""

from pathlib import Path

import numpy as np
import pytest
from edmkit.containers import save_edm_batch
from edmkit.edm import edm_from_trajectory
from edmkit.fbm import FbmParams, generate_fbm

from trainkit.data import export_dataset_splits
from trainkit.train import TrainConfig, train

CACHE = Path(__file__).parent / "_cache"

# dataset tag -> (hurst, count, seed); all n=16 desk-scale
DATASETS = {
    "fbm_h12": (0.5, 5000, 1012),
    "fbm_h13": (1.0 / 3.0, 5000, 1013),
}

# model tag -> (dataset tag, train split?, epochs, seed)
# h12 trains on half its dataset so the other half is a genuine held-out
# split for the FID comparison; h13 only feeds the imputation benchmark.
# h13 stops at 40 epochs deliberately: a 100-epoch run reaches lower
# training loss and equally good unconditional statistics but measurably
# worse conditional completions across all four inpainters (sharper fit,
# poorer behavior on the off-manifold states projection steps visit).
ACCEPTANCE_MODELS = {
    "h12": ("fbm_h12", True, 100, 0),
    "h13": ("fbm_h13", False, 40, 1),
}


def ensure_dataset(tag: str) -> Path:
    hurst, count, seed = DATASETS[tag]
    path = CACHE / f"{tag}_{count}.edmd"
    if not path.exists():
        CACHE.mkdir(exist_ok=True)
        trajs = generate_fbm(FbmParams(hurst=hurst, n_points=16), count, seed)
        edms = np.stack([edm_from_trajectory(t).values for t in trajs])
        save_edm_batch(path, edms, hurst=hurst, squared=True)
    return path


def ensure_splits(tag: str) -> tuple[Path, Path]:
    dataset = ensure_dataset(tag)
    a = dataset.with_name(f"{dataset.stem}_split0.edmd")
    b = dataset.with_name(f"{dataset.stem}_split1.edmd")
    if not (a.exists() and b.exists()):
        export_dataset_splits(dataset, (0.5, 0.5), seed=0)
    return a, b


def ensure_model(tag: str, log=None) -> Path:
    ds_tag, use_split, epochs, seed = ACCEPTANCE_MODELS[tag]
    out = CACHE / f"model_{tag}_e{epochs}_s{seed}.epsw"
    if not out.exists():
        dataset = ensure_splits(ds_tag)[0] if use_split else ensure_dataset(ds_tag)
        train(TrainConfig(dataset=dataset, out=out, epochs=epochs,
                          batch_size=128, lr=3e-4, base_channels=32,
                          groups=8, seed=seed), log=log)
    return out


@pytest.fixture(scope="session")
def h12_model() -> Path:
    return ensure_model("h12")


@pytest.fixture(scope="session")
def h13_model() -> Path:
    return ensure_model("h13")


@pytest.fixture(scope="session")
def h12_splits() -> tuple[Path, Path]:
    return ensure_splits("fbm_h12")
