"""Greedy uniqueness test for masked distance matrices (bar-joint rigidity).

The test grows a seed clique in the mask graph greedily from every starting
vertex (keeping the largest found, not the exact maximum clique), then
repeatedly adopts the external vertex with the most known links into the
adopted set, requiring at least `min_links` (= D + 1 = 4 in 3-D: four sphere
constraints pin a point in general position, three leave a mirror pair).
The result is rigid iff every vertex gets adopted.

rigid=True implies the completion is unique for points in general position;
rigid=False is inconclusive (the test is sound but incomplete).

A candidate's link count uses the original mask edges only. Counting a
previously adopted vertex as a free link regardless of the data (the cheaper
bookkeeping where an adopted vertex's whole row is marked known) would adopt
vertices pinned by fewer than min_links real constraints and break soundness;
see tests for an explicit counterexample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .edm import Mask, random_mask

__all__ = ["RigidityResult", "is_rigid", "rigid_fraction"]


@dataclass
class RigidityResult:
    rigid: bool
    seed_clique: list
    adoption_order: list   # vertices adopted after the clique stage, in order

    @property
    def num_adopted(self) -> int:
        return len(self.seed_clique) + len(self.adoption_order)


def _greedy_clique(adj: np.ndarray, start: int) -> list:
    members = [start]
    in_clique = adj[start].copy()
    in_clique[start] = False
    for j in range(adj.shape[0]):
        if in_clique[j]:
            members.append(j)
            in_clique &= adj[j]
    return members


def is_rigid(mask, min_links: int = 4, _count_adopted_as_linked: bool = False) -> RigidityResult:
    """Run the greedy rigidity test on a mask (Mask or 0/1 ndarray, 1 = known).

    Deterministic: the largest seed clique is taken from the lowest starting
    vertex achieving it, and adoption ties break to the lowest vertex index.

    `_count_adopted_as_linked` switches to the bookkeeping where adoption
    marks the vertex's entire row as known, so later candidates count it for
    free. Kept for comparison only; it is unsound (see module docstring).
    """
    bits = mask.bits if isinstance(mask, Mask) else Mask(bits=np.asarray(mask)).bits
    n = bits.shape[0]
    if n < min_links:
        raise ValueError(f"need at least min_links={min_links} vertices, got n={n}")
    adj = bits.astype(bool)

    best: list = []
    for start in range(n):
        c = _greedy_clique(adj, start)
        if len(c) > len(best):
            best = c
    seed_clique = sorted(best)

    adopted = np.zeros(n, dtype=bool)
    adopted[seed_clique] = True
    # counts[i] = number of known links from i into the adopted set
    counts = adj[:, adopted].sum(axis=1)
    order = []
    while not adopted.all():
        counts_masked = np.where(adopted, -1, counts)
        cand = int(np.argmax(counts_masked))   # argmax takes the lowest index on ties
        if counts_masked[cand] < min_links:
            return RigidityResult(rigid=False, seed_clique=seed_clique, adoption_order=order)
        adopted[cand] = True
        order.append(cand)
        if _count_adopted_as_linked:
            counts += 1     # every remaining vertex sees the newcomer as a known link
        else:
            counts += adj[:, cand]
    return RigidityResult(rigid=True, seed_clique=seed_clique, adoption_order=order)


def rigid_fraction(n: int, mu: float, trials: int, seed: int, min_links: int = 4) -> float:
    """Fraction of random Bernoulli masks (missing ratio mu) that test rigid.

    Trial t uses the mask seed (seed XOR t), so the estimate is independent of
    evaluation order or parallelism.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    hits = 0
    for t in range(trials):
        m = random_mask(n, mu, seed=int(np.uint64(seed) ^ np.uint64(t)))
        if is_rigid(m, min_links=min_links).rigid:
            hits += 1
    return hits / trials
