"""Euclidean distance matrices: construction, validation, realization, masks.

Conventions:
  * matrices hold SQUARED distances a_ij = |x_i - x_j|^2 unless the `squared`
    tag says otherwise;
  * masks are symmetric binary matrices, b_ij = 1 meaning "entry known",
    b_ii = 0 on the diagonal;
  * the missing ratio of a mask counts unknown strictly-upper-triangle
    entries: mu = 2 m_unknown / (n (n - 1)).

An exact EDM of points in R^D has rank at most D + 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DistanceMatrix", "Mask", "MaskedMatrix", "ValidationReport", "RealizationResult",
    "RealizationError", "edm_from_trajectory", "validate_edm", "gram_from_edm",
    "realize", "rank_fraction", "random_mask", "row_col_mask", "apply_mask",
]


@dataclass
class DistanceMatrix:
    values: np.ndarray
    squared: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError(f"distance matrix must be square, got shape {self.values.shape}")

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass
class Mask:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2 or bits.shape[0] != bits.shape[1]:
            raise ValueError(f"mask must be square, got shape {bits.shape}")
        if not np.isin(bits, (0, 1)).all():
            raise ValueError("mask entries must be 0 or 1")
        bits = bits.astype(np.uint8)
        if (bits != bits.T).any():
            raise ValueError("mask must be symmetric")
        if bits.trace() != 0:
            raise ValueError("mask diagonal must be 0 (self-distances carry no information)")
        self.bits = bits

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def missing_ratio(self) -> float:
        n = self.n
        iu = np.triu_indices(n, k=1)
        unknown = int((self.bits[iu] == 0).sum())
        return 2.0 * unknown / (n * (n - 1))


@dataclass
class MaskedMatrix:
    """A distance matrix with a known-entry mask. `values` is zero-filled at
    unknown entries; whatever the source held there is not trusted."""
    matrix: DistanceMatrix
    mask: Mask

    def __post_init__(self):
        if self.matrix.n != self.mask.n:
            raise ValueError(f"matrix size {self.matrix.n} != mask size {self.mask.n}")

    @property
    def n(self) -> int:
        return self.matrix.n

    @property
    def values(self) -> np.ndarray:
        return self.matrix.values

    @property
    def bits(self) -> np.ndarray:
        return self.mask.bits


def edm_from_trajectory(trajectory) -> DistanceMatrix:
    """Squared-distance matrix of one trajectory, shape (n, dim) -> (n, n).

    Output is exactly symmetric, exactly hollow, and non-negative.
    """
    x = np.asarray(trajectory, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected (n, dim) coordinates, got shape {x.shape}")
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    d2 = 0.5 * (d2 + d2.T)
    np.clip(d2, 0.0, None, out=d2)
    np.fill_diagonal(d2, 0.0)
    return DistanceMatrix(values=d2, squared=True)


@dataclass
class ValidationReport:
    max_asymmetry: float
    max_diagonal: float
    min_entry: float
    worst_triangle_violation: float
    triples_checked: int
    tol: float

    @property
    def ok(self) -> bool:
        scale = 1.0
        return (self.max_asymmetry <= self.tol * scale
                and self.max_diagonal <= self.tol * scale
                and self.min_entry >= -self.tol * scale
                and self.worst_triangle_violation <= self.tol)


def validate_edm(dm, tol=1e-9, max_triples=2_000_000, seed=0) -> ValidationReport:
    """Check symmetry, hollowness, non-negativity and the triangle inequality
    on raw distances (sqrt of entries when squared).

    All n^3 triples are checked when that fits in `max_triples`; otherwise a
    seeded random sample of triples is used and `triples_checked` reports how
    many.
    """
    a = dm.values if isinstance(dm, DistanceMatrix) else np.asarray(dm, dtype=np.float64)
    squared = dm.squared if isinstance(dm, DistanceMatrix) else True
    n = a.shape[0]
    max_asym = float(np.max(np.abs(a - a.T))) if n else 0.0
    max_diag = float(np.max(np.abs(np.diag(a)))) if n else 0.0
    min_entry = float(a.min()) if n else 0.0
    r = np.sqrt(np.clip(a, 0.0, None))
    if not squared:
        r = np.clip(a, 0.0, None)
    # triangle: r_ij <= r_ik + r_kj for all k
    if n ** 3 <= max_triples:
        # viol[i, j, k] = r[i, j] - r[i, k] - r[k, j]
        viol = r[:, :, None] - r[:, None, :] - r.T[None, :, :]
        worst = float(viol.max()) if n else 0.0
        checked = n ** 3
    else:
        gen = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        idx = gen.integers(0, n, size=(max_triples, 3))
        i, j, k = idx[:, 0], idx[:, 1], idx[:, 2]
        worst = float(np.max(r[i, j] - r[i, k] - r[k, j]))
        checked = max_triples
    return ValidationReport(max_asymmetry=max_asym, max_diagonal=max_diag,
                            min_entry=min_entry, worst_triangle_violation=worst,
                            triples_checked=checked, tol=tol)


def gram_from_edm(dm, anchor: int = 0) -> np.ndarray:
    """Gram matrix of points relative to the anchor point:

        g_ij = (a[anchor, i] - a[i, j] + a[anchor, j]) / 2

    over the n-1 non-anchor points. Requires squared entries.
    """
    a = dm.values if isinstance(dm, DistanceMatrix) else np.asarray(dm, dtype=np.float64)
    if isinstance(dm, DistanceMatrix) and not dm.squared:
        raise ValueError("gram_from_edm requires squared distances")
    n = a.shape[0]
    if not 0 <= anchor < n:
        raise ValueError(f"anchor {anchor} out of range for n={n}")
    keep = np.r_[0:anchor, anchor + 1:n]
    row = a[anchor, keep]
    g = 0.5 * (row[:, None] + row[None, :] - a[np.ix_(keep, keep)])
    return 0.5 * (g + g.T)


class RealizationError(ValueError):
    def __init__(self, message, eigenvalues):
        super().__init__(message)
        self.eigenvalues = np.asarray(eigenvalues)


@dataclass
class RealizationResult:
    coordinates: np.ndarray   # (n, dim), anchor point at the origin
    eigenvalues: np.ndarray   # full Gram spectrum, descending
    residual: float           # max |EDM(coordinates) - input| (0.0 for strict exact)


def realize(dm, dim: int = 3, mode: str = "strict", tol: float = 1e-8,
            anchor: int = 0) -> RealizationResult:
    """Recover coordinates from an EDM through the anchored Gram matrix.

    strict: raise RealizationError (carrying the spectrum) if the Gram matrix
    has an eigenvalue below -tol * max|eig| or more than `dim` eigenvalues
    above tol * max|eig|.

    best_effort: classical-MDS truncation, keeping the top `dim` non-negative
    eigenvalues; the residual reports the max-norm EDM mismatch.
    """
    if mode not in ("strict", "best_effort"):
        raise ValueError(f"mode must be 'strict' or 'best_effort', got {mode!r}")
    a = dm.values if isinstance(dm, DistanceMatrix) else np.asarray(dm, dtype=np.float64)
    n = a.shape[0]
    g = gram_from_edm(dm if isinstance(dm, DistanceMatrix) else a, anchor=anchor)
    w, v = np.linalg.eigh(g)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    wmax = max(float(w[0]), 0.0)
    floor = tol * (wmax if wmax > 0 else 1.0)
    if mode == "strict":
        if w[-1] < -floor:
            raise RealizationError(
                f"Gram matrix is not positive semidefinite: min eigenvalue {w[-1]:.3e} "
                f"below -{floor:.3e}", w)
        if (w > floor).sum() > dim:
            raise RealizationError(
                f"Gram matrix needs more than dim={dim} dimensions: "
                f"{int((w > floor).sum())} significant eigenvalues", w)
    k = min(dim, len(w))
    lam = np.clip(w[:k], 0.0, None)
    pts = v[:, :k] * np.sqrt(lam)[None, :]
    coords = np.zeros((n, dim))
    keep = np.r_[0:anchor, anchor + 1:n]
    coords[keep, :k] = pts
    rebuilt = edm_from_trajectory(coords).values
    residual = float(np.max(np.abs(rebuilt - a)))
    return RealizationResult(coordinates=coords, eigenvalues=w, residual=residual)


def rank_fraction(dm, r: int = 5, norm: str = "spectral-l2") -> float:
    """Fraction of the spectrum carried by the top r singular values.

    spectral-l2: sqrt(sum of squares of top r) / sqrt(sum of squares of all).
    nuclear:     sum of top r absolute eigenvalues / sum of all absolute
                 eigenvalues (symmetric input).
    """
    a = dm.values if isinstance(dm, DistanceMatrix) else np.asarray(dm, dtype=np.float64)
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    sv = np.sort(np.abs(np.linalg.eigvalsh(0.5 * (a + a.T))))[::-1]
    if norm == "spectral-l2":
        total = float(np.sum(sv * sv))
        if total == 0.0:
            return 1.0
        return float(np.sqrt(np.sum(sv[:r] ** 2) / total))
    if norm == "nuclear":
        total = float(sv.sum())
        if total == 0.0:
            return 1.0
        return float(sv[:r].sum() / total)
    raise ValueError(f"unknown norm {norm!r}; use 'spectral-l2' or 'nuclear'")


def random_mask(n: int, mu: float, seed: int) -> Mask:
    """Bernoulli mask: each strictly-upper-triangle entry is unknown with
    probability mu, mirrored to the lower triangle, diagonal 0."""
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must be in [0, 1], got {mu}")
    gen = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    iu = np.triu_indices(n, k=1)
    known = (gen.random(iu[0].size) >= mu).astype(np.uint8)
    bits = np.zeros((n, n), dtype=np.uint8)
    bits[iu] = known
    bits |= bits.T
    return Mask(bits=bits)


def row_col_mask(n: int, rows) -> Mask:
    """All entries known except the given rows/columns (and the diagonal)."""
    rows = np.asarray(rows, dtype=int)
    if rows.size and (rows.min() < 0 or rows.max() >= n):
        raise ValueError(f"row indices out of range for n={n}")
    bits = np.ones((n, n), dtype=np.uint8)
    bits[rows, :] = 0
    bits[:, rows] = 0
    np.fill_diagonal(bits, 0)
    return Mask(bits=bits)


def apply_mask(dm: DistanceMatrix, mask: Mask, strict: bool = False) -> MaskedMatrix:
    """Zero the unknown entries of dm and pair it with the mask.

    strict=True additionally checks the partial-EDM conditions on the known
    entries: symmetry, non-negativity, and the triangle inequality on every
    triple whose three pairs are all known.
    """
    if dm.n != mask.n:
        raise ValueError(f"matrix size {dm.n} != mask size {mask.n}")
    vals = dm.values * mask.bits
    mm = MaskedMatrix(matrix=DistanceMatrix(values=vals, squared=dm.squared), mask=mask)
    if strict:
        b = mask.bits.astype(bool)
        if (vals[b] < 0).any():
            raise ValueError("known entries must be non-negative")
        r = np.sqrt(np.clip(vals, 0.0, None)) if dm.squared else vals
        # triple (i, j, k) fully known: b_ij, b_ik, b_kj
        full = b[:, :, None] & b[:, None, :] & b.T[None, :, :]
        viol = r[:, :, None] - r[:, None, :] - r.T[None, :, :]
        if full.any() and float(viol[full].max()) > 1e-9:
            raise ValueError("known entries violate the triangle inequality "
                             f"(worst excess {float(viol[full].max()):.3e})")
    return mm
