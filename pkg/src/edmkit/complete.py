"""Classical completion of masked distance matrices.

Methods:
  fista_complete          nuclear-norm regularized completion by accelerated
                          singular-value thresholding with hard data consistency
  opt_complete            coordinate descent on the known-entry squared loss
                          with Adam steps (returns the EDM of the optimized
                          coordinates; known entries NOT overwritten)
  nn_complete             nearest known entry in Manhattan index distance
  db_search_complete      best database matrix on known entries, masked entries
                          copied from it
  ensemble_mean_complete  across-cell mean of each entry where known

All methods leave the known entries authoritative: fista/nn/db/mean outputs
equal the input on known entries exactly; opt reports the coordinates' own
distances everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .edm import DistanceMatrix, Mask, MaskedMatrix, edm_from_trajectory, realize

__all__ = [
    "CompletionResult", "soft_threshold", "fista_complete", "opt_complete",
    "nn_complete", "db_search_complete", "ensemble_mean_complete",
    "pair_loss", "pair_loss_grad",
]


@dataclass
class CompletionResult:
    matrix: DistanceMatrix
    method: str
    iterations: int = 0
    final_loss: float = float("nan")
    extras: dict = field(default_factory=dict)


def soft_threshold(a, beta: float) -> np.ndarray:
    """Singular-value soft threshold: U (S - beta)_+ V^T via full SVD."""
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    u, s, vt = np.linalg.svd(np.asarray(a, dtype=np.float64), full_matrices=False)
    s = np.clip(s - beta, 0.0, None)
    return (u * s[None, :]) @ vt


def fista_complete(mm: MaskedMatrix, beta=None, tol: float = 1e-7,
                   max_iter: int = 5000, continuation_stages: int = 0,
                   continuation_decay: float = 0.5) -> CompletionResult:
    """Accelerated nuclear-norm completion.

    Iterates A <- D_beta(known + (1-B) * Z) with FISTA momentum on Z, starting
    from the zero-filled matrix. Stops when the relative change of the loss
        |B * (A - known)|_F^2 + beta * |A|_*
    drops below tol. beta defaults to 0.1 x the mean magnitude of the known
    entries. On exit the known entries are overwritten from the input, the
    matrix is symmetrized and the diagonal zeroed.

    With continuation_stages > 0 the solve is repeated that many extra times,
    shrinking beta by continuation_decay between stages and warm-starting each
    stage from the previous solution (momentum reset). This tracks the small-
    beta solution path; for large well-sampled matrices it converges to the
    minimum-nuclear-norm completion, which can reproduce the unknown entries
    to near machine precision. Note that for small matrices the minimum-
    nuclear-norm completion is frequently NOT the true matrix even when the
    completion is unique in the geometric sense, so no beta schedule can
    guarantee exact recovery there; see the rigidity module for the
    uniqueness test itself.
    """
    if continuation_stages < 0:
        raise ValueError("continuation_stages must be >= 0")
    b = mm.bits.astype(np.float64)
    known = mm.values * b
    n_known = b.sum()
    if beta is None:
        beta = 0.1 * (np.abs(known).sum() / n_known) if n_known else 0.0
    beta0 = float(beta)
    a_prev = known.copy()
    iterations = 0
    loss = float("nan")
    for stage in range(continuation_stages + 1):
        z = a_prev.copy()
        t = 1.0
        loss_prev = None
        for _k in range(max_iter):
            iterations += 1
            mixed = known + (1.0 - b) * z
            u, s, vt = np.linalg.svd(mixed, full_matrices=False)
            s_shr = np.clip(s - beta, 0.0, None)
            a = (u * s_shr[None, :]) @ vt
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            z = a + ((t - 1.0) / t_next) * (a - a_prev)
            loss = float(np.sum((b * (a - known)) ** 2) + beta * s_shr.sum())
            a_prev = a
            t = t_next
            if loss_prev is not None and loss_prev > 0:
                if abs(loss - loss_prev) / loss_prev < tol:
                    break
            loss_prev = loss
        if stage < continuation_stages:
            beta *= continuation_decay
    out = 0.5 * (a_prev + a_prev.T)
    out = np.where(b > 0, mm.values, out)
    np.fill_diagonal(out, 0.0)
    return CompletionResult(matrix=DistanceMatrix(values=out, squared=mm.matrix.squared),
                            method="fista", iterations=iterations, final_loss=loss,
                            extras={"beta": beta0, "beta_final": float(beta),
                                    "stages": continuation_stages + 1})


def pair_loss(x, known, bits) -> float:
    """L(x) = sum over known pairs i<j of (|x_i - x_j|^2 - known_ij)^2."""
    d2 = edm_from_trajectory(x).values
    e = bits * (d2 - known)
    return 0.5 * float(np.sum(e * e))


def pair_loss_grad(x, known, bits) -> np.ndarray:
    """dL/dx_i = sum_j 4 b_ij (|x_i - x_j|^2 - known_ij) (x_i - x_j)."""
    x = np.asarray(x, dtype=np.float64)
    d2 = edm_from_trajectory(x).values
    e = bits * (d2 - known)
    diff = x[:, None, :] - x[None, :, :]
    return 4.0 * np.einsum("ij,ijk->ik", e, diff)


def _adam_descend(x0, known, bits, steps, lr):
    """Adam on coordinates; x0 may be (n, dim) or batched (r, n, dim)."""
    x = np.array(x0, dtype=np.float64)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    b1, b2, eps = 0.9, 0.999, 1e-8
    batched = x.ndim == 3
    for k in range(1, steps + 1):
        if batched:
            g = np.stack([pair_loss_grad(xi, known, bits) for xi in x])
        else:
            g = pair_loss_grad(x, known, bits)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** k)
        vh = v / (1 - b2 ** k)
        x -= lr * mh / (np.sqrt(vh) + eps)
    return x


def opt_complete(mm: MaskedMatrix, dim: int = 3, steps: int = 5000, lr: float = 0.05,
                 restarts: int = 1, seed: int = 0, init=None) -> CompletionResult:
    """Coordinate optimization of the known-entry loss with Adam.

    The problem is normalized so coordinates are O(1): entries are divided by
    the mean known entry and lr applies to the normalized coordinates. The
    default start is the best-effort realization of nn_complete's output;
    additional restarts perturb it with seeded Gaussian noise and the lowest
    final loss wins. The returned matrix is the exact EDM of the optimized
    coordinates (known entries are NOT overwritten).
    """
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    bits = mm.bits.astype(np.float64)
    n_known = bits.sum()
    scale = (np.abs(mm.values * bits).sum() / n_known) if n_known else 1.0
    if scale <= 0:
        scale = 1.0
    known_n = (mm.values * bits) / scale
    if init is None:
        warm = nn_complete(mm).matrix
        init = realize(warm, dim=dim, mode="best_effort").coordinates
    x0 = np.asarray(init, dtype=np.float64) / np.sqrt(scale)
    gen = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    starts = [x0]
    for _ in range(restarts - 1):
        starts.append(x0 + 0.3 * gen.standard_normal(x0.shape))
    xs = _adam_descend(np.stack(starts), known_n, bits, steps, lr)
    losses = [pair_loss(xi, known_n, bits) for xi in xs]
    best = int(np.argmin(losses))
    coords = xs[best] * np.sqrt(scale)
    out = edm_from_trajectory(coords)
    return CompletionResult(matrix=DistanceMatrix(values=out.values, squared=mm.matrix.squared),
                            method="opt", iterations=steps,
                            final_loss=float(losses[best] * scale * scale),
                            extras={"coordinates": coords, "restart_losses":
                                    [float(l * scale * scale) for l in losses]})


def nn_complete(mm: MaskedMatrix) -> CompletionResult:
    """Fill each unknown entry with the known entry nearest in Manhattan index
    distance |i-i'| + |j-j'|; ties break to the smallest |i-i'|, then to the
    smallest (i', j') lexicographically."""
    b = mm.bits.astype(bool)
    vals = mm.values
    n = mm.n
    ki, kj = np.nonzero(b)
    if ki.size == 0:
        raise ValueError("nn_complete needs at least one known entry")
    out = vals.copy()
    iu = np.triu_indices(n, k=1)
    for i, j in zip(*iu):
        if b[i, j]:
            continue
        di = np.abs(ki - i)
        d = di + np.abs(kj - j)
        at_min = d == d.min()
        # tie-break: smallest |i-i'|, then smallest (i', j') lexicographically
        cand = np.flatnonzero(at_min)
        order = np.lexsort((kj[cand], ki[cand], di[cand]))
        pick = cand[order[0]]
        out[i, j] = out[j, i] = vals[ki[pick], kj[pick]]
    np.fill_diagonal(out, 0.0)
    return CompletionResult(matrix=DistanceMatrix(values=out, squared=mm.matrix.squared),
                            method="nn")


def db_search_complete(mm: MaskedMatrix, database) -> CompletionResult:
    """Pick the database matrix closest to the known entries
    (epsilon_i = |B * (A_i - known)|_F^2, lowest index on ties) and copy its
    values into the masked entries."""
    db = np.asarray(database, dtype=np.float64)
    if db.ndim != 3 or db.shape[1] != mm.n or db.shape[2] != mm.n:
        raise ValueError(f"database shape {db.shape} incompatible with n={mm.n}")
    if db.shape[0] == 0:
        raise ValueError("database is empty")
    b = mm.bits.astype(np.float64)
    diffs = (db - mm.values[None]) * b[None]
    errs = np.einsum("kij,kij->k", diffs, diffs)
    best = int(np.argmin(errs))   # argmin takes the lowest index on ties
    out = b * mm.values + (1.0 - b) * db[best]
    np.fill_diagonal(out, 0.0)
    return CompletionResult(matrix=DistanceMatrix(values=out, squared=mm.matrix.squared),
                            method="db", final_loss=float(errs[best]),
                            extras={"db_index": best, "errors": errs})


def ensemble_mean_complete(cells, target_index: int) -> CompletionResult:
    """Complete cell `target_index` by averaging each masked entry across the
    cells where that entry is known.

    Entries known in no cell fall back to nn_complete fills; their count is
    reported in extras["fallback_entries"].
    """
    if not cells:
        raise ValueError("need at least one cell")
    mm = cells[target_index]
    vals = np.stack([c.values for c in cells])
    bits = np.stack([c.bits.astype(np.float64) for c in cells])
    counts = bits.sum(axis=0)
    sums = (vals * bits).sum(axis=0)
    with np.errstate(invalid="ignore"):
        means = np.where(counts > 0, sums / np.where(counts > 0, counts, 1.0), 0.0)
    b = mm.bits.astype(bool)
    out = np.where(b, mm.values, means)
    never = (~b) & (counts == 0)
    np.fill_diagonal(never, False)
    fallback = int(never.sum())
    if fallback:
        # in-matrix fill treating the across-cell means as known sources
        seen = (b | (counts > 0)) & ~np.eye(mm.n, dtype=bool)
        interim = MaskedMatrix(matrix=DistanceMatrix(values=out * seen, squared=mm.matrix.squared),
                               mask=Mask(bits=seen.astype(np.uint8)))
        filled = nn_complete(interim).matrix.values
        out = np.where(never, filled, out)
    np.fill_diagonal(out, 0.0)
    return CompletionResult(matrix=DistanceMatrix(values=out, squared=mm.matrix.squared),
                            method="mean", extras={"fallback_entries": fallback})
