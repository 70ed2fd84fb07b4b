"""Dataset plumbing: EDMD loading, normalization statistics, split export.

Everything speaks the primary package's container formats; intra-package
state is plain numpy. Splits are deterministic in (dataset, fractions,
seed) and disjoint by construction.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from edmkit.containers import load_edm_batch, save_edm_batch

__all__ = ["load_training_batch", "normalization_stats",
           "export_dataset_splits"]


def load_training_batch(path):
    """Load an EDMD file as squared distance matrices.

    Returns (values (k, n, n) float64 squared, hurst-or-None, n).
    """
    batch = load_edm_batch(path)
    values = np.asarray(batch.values, dtype=np.float64)
    if not batch.squared:
        values = values ** 2
    if values.shape[0] == 0:
        raise ValueError(f"dataset {path} is empty")
    return values, batch.hurst, values.shape[-1]


def normalization_stats(values: np.ndarray) -> tuple[float, float]:
    """Mean and standard deviation of the off-diagonal entries.

    The diagonal is structurally zero in every matrix and would only dilute
    the statistics; the pair (mu, sigma) stays interpretable as the moments
    of the squared-distance population.
    """
    values = np.asarray(values, dtype=np.float64)
    off = ~np.eye(values.shape[-1], dtype=bool)
    pop = values[:, off]
    mu = float(pop.mean())
    sigma = float(pop.std())
    if sigma == 0.0:
        raise ValueError("degenerate dataset: off-diagonal entries are constant")
    return mu, sigma


def export_dataset_splits(dataset, fractions, seed: int,
                          out_dir=None) -> list[Path]:
    """Split an EDMD file into disjoint EDMD files, one per fraction.

    Row counts are floor(fraction * total) with the remainder of the
    requested mass distributed to the earliest splits, so (0.5, 0.5) of
    1000 gives exactly 500/500. The permutation is drawn from a Philox
    stream keyed by `seed`, making the split a pure function of
    (dataset contents, fractions, seed). Files land next to the dataset
    (or in out_dir) as <stem>_split0.edmd, <stem>_split1.edmd, ...
    """
    fractions = [float(f) for f in fractions]
    if not fractions or any(f <= 0 for f in fractions):
        raise ValueError(f"fractions must be positive, got {fractions}")
    if sum(fractions) > 1.0 + 1e-9:
        raise ValueError(f"fractions sum to {sum(fractions)}, must be <= 1")
    dataset = Path(dataset)
    batch = load_edm_batch(dataset)
    total = batch.values.shape[0]
    counts = [int(f * total) for f in fractions]
    spare = int(round(sum(fractions) * total)) - sum(counts)
    for i in range(spare):
        counts[i % len(counts)] += 1
    if sum(counts) > total:
        raise ValueError(f"splits need {sum(counts)} rows, dataset has {total}")

    perm = np.random.Generator(np.random.Philox(seed)).permutation(total)
    out_dir = Path(out_dir) if out_dir is not None else dataset.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    start = 0
    for i, c in enumerate(counts):
        rows = np.sort(perm[start:start + c])
        start += c
        path = out_dir / f"{dataset.stem}_split{i}.edmd"
        save_edm_batch(path, batch.values[rows], hurst=batch.hurst,
                       squared=batch.squared)
        paths.append(path)
    return paths
