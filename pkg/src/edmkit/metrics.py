"""Evaluation metrics for completed matrices and generated ensembles.

Masked RMSE, ensemble Frechet distance under a pluggable linear embedding,
distance scaling-exponent fits, a chi-squared shape test for the rescaled
distance distribution, the database-size scaling fit, and the entropy-based
size bound.

Everything here is pure; ensemble reductions use numpy's fixed-order pairwise
summation, so results are reproducible bit for bit on a given platform.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .containers import load_embedding_arrays, save_embedding_arrays
from .edm import DistanceMatrix, Mask

__all__ = [
    "EnsembleEmbedding", "FidScalingFit", "CollapseReport", "FrechetError",
    "rmse_masked", "frechet_distance", "scaling_exponent", "gaussian_collapse",
    "fid_scaling_fit", "theoretical_m_star", "metric_report",
]


class FrechetError(ValueError):
    """Raised when the covariance square root is numerically meaningless."""


def _flatten(ensemble) -> np.ndarray:
    """(count, d) float64 view of a list of DistanceMatrix or an array."""
    if isinstance(ensemble, np.ndarray):
        if ensemble.ndim < 2:
            raise ValueError("ensemble array must be at least 2-D (count, ...)")
        return ensemble.reshape(ensemble.shape[0], -1).astype(np.float64, copy=False)
    mats = list(ensemble)
    if not mats:
        raise ValueError("ensemble is empty")
    rows = []
    for m in mats:
        rows.append((m.values if isinstance(m, DistanceMatrix) else np.asarray(m, dtype=np.float64)).ravel())
    return np.asarray(rows, dtype=np.float64)


@dataclass
class EnsembleEmbedding:
    """Linear map from matrices to feature vectors for ensemble statistics.

    kind "identity-flatten" flattens each matrix unchanged; kind "pca"
    centers by `mean` and projects onto the rows of `basis` (orthonormal
    within 1e-8, checked at fit and load time). `provenance` identifies the
    reference ensemble a pca fit came from.
    """

    kind: str
    mean: np.ndarray | None = None
    basis: np.ndarray | None = None
    provenance: str = ""

    def __post_init__(self):
        if self.kind not in ("identity-flatten", "pca"):
            raise ValueError(f"unknown embedding kind {self.kind!r}")
        if self.kind == "pca":
            if self.mean is None or self.basis is None:
                raise ValueError("pca embedding needs mean and basis")
            self.mean = np.asarray(self.mean, dtype=np.float64).ravel()
            self.basis = np.asarray(self.basis, dtype=np.float64)
            if self.basis.ndim != 2 or self.basis.shape[1] != self.mean.size:
                raise ValueError(f"basis shape {self.basis.shape} incompatible "
                                 f"with mean length {self.mean.size}")
            gram = self.basis @ self.basis.T
            err = np.abs(gram - np.eye(self.basis.shape[0])).max()
            if err > 1e-8:
                raise ValueError(f"pca basis is not orthonormal (max deviation {err:.3g})")

    @classmethod
    def identity(cls) -> "EnsembleEmbedding":
        return cls(kind="identity-flatten")

    @classmethod
    def fit_pca(cls, reference, dim: int = 64, provenance: str | None = None) -> "EnsembleEmbedding":
        """Fit a `dim`-dimensional PCA basis to a reference ensemble.

        provenance defaults to a digest of the training data, so reports can
        tell which reference a fit belongs to.
        """
        flat = _flatten(reference)
        count, d = flat.shape
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        if count <= dim:
            raise ValueError(f"need more than {dim} reference matrices, got {count}")
        if dim > d:
            raise ValueError(f"dim {dim} exceeds flattened size {d}")
        mean = flat.mean(axis=0)
        _, _, vt = np.linalg.svd(flat - mean[None, :], full_matrices=False)
        prov = provenance if provenance is not None else \
            hashlib.sha256(np.ascontiguousarray(flat).tobytes()).hexdigest()[:16]
        return cls(kind="pca", mean=mean, basis=vt[:dim], provenance=prov)

    @property
    def dim(self) -> int | None:
        """Output dimension; None for identity-flatten (input-dependent)."""
        return None if self.kind == "identity-flatten" else self.basis.shape[0]

    def embed(self, ensemble) -> np.ndarray:
        flat = _flatten(ensemble)
        if self.kind == "identity-flatten":
            return flat
        if flat.shape[1] != self.mean.size:
            raise ValueError(f"flattened size {flat.shape[1]} does not match "
                             f"embedding input size {self.mean.size}")
        return (flat - self.mean[None, :]) @ self.basis.T

    def save(self, path) -> None:
        if self.kind != "pca":
            raise ValueError("only pca embeddings serialize")
        save_embedding_arrays(path, self.mean, self.basis)

    @classmethod
    def load(cls, path, provenance: str = "") -> "EnsembleEmbedding":
        mean, basis = load_embedding_arrays(path)
        # storage is f32, which erodes orthonormality past the 1e-8 invariant;
        # snap to the nearest orthonormal-row matrix (polar polish)
        u, _, vt = np.linalg.svd(basis, full_matrices=False)
        return cls(kind="pca", mean=mean, basis=u @ vt, provenance=provenance)


def _raw_distances(dm: DistanceMatrix) -> np.ndarray:
    # completions may carry small negative squared entries; the best distance
    # reading of a negative squared prediction is zero
    return np.sqrt(np.clip(dm.values, 0.0, None)) if dm.squared else dm.values


def rmse_masked(a_hat: DistanceMatrix, a_true: DistanceMatrix, b: Mask) -> float:
    """RMSE over the hidden entries (b = 0, off-diagonal), on raw distances."""
    if a_hat.values.shape != a_true.values.shape or a_hat.values.shape != b.bits.shape:
        raise ValueError("matrix and mask shapes must match")
    hidden = (b.bits == 0) & ~np.eye(b.bits.shape[0], dtype=bool)
    if not hidden.any():
        raise ValueError("mask hides no off-diagonal entries")
    diff = _raw_distances(a_hat)[hidden] - _raw_distances(a_true)[hidden]
    return float(np.sqrt(np.mean(diff ** 2)))


def _psd_sqrt(c: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((c + c.T) / 2)
    scale = max(1.0, float(np.abs(w).max()))
    if w.min() < -1e-8 * scale:
        raise FrechetError(f"covariance is not positive semidefinite; eigenvalues {w}")
    return (v * np.sqrt(np.clip(w, 0, None))[None, :]) @ v.T


def _frechet_from_moments(mu1, cov1, mu2, cov2) -> float:
    cov1 = np.atleast_2d(np.asarray(cov1, dtype=np.float64))
    cov2 = np.atleast_2d(np.asarray(cov2, dtype=np.float64))
    s1 = _psd_sqrt(cov1)
    inner = s1 @ cov2 @ s1
    w = np.linalg.eigvalsh((inner + inner.T) / 2)
    scale = max(1.0, float(np.abs(w).max()))
    if w.min() < -1e-8 * scale:
        raise FrechetError(f"covariance product has negative spectrum; eigenvalues {w}")
    diff = np.atleast_1d(mu1) - np.atleast_1d(mu2)
    return float(diff @ diff + np.trace(cov1) + np.trace(cov2)
                 - 2.0 * np.sqrt(np.clip(w, 0, None)).sum())


def frechet_distance(e1, e2, emb: EnsembleEmbedding | None = None,
                     error_bars: bool = False, draws: int = 100,
                     frac: float = 0.9, seed: int = 0):
    """Frechet distance between the Gaussian fits of two embedded ensembles.

    Returns a float, or (value, stderr) with error_bars=True where stderr is
    the standard deviation over `draws` random subsamples keeping `frac` of
    each ensemble.
    """
    emb = emb or EnsembleEmbedding.identity()
    z1 = emb.embed(e1)
    z2 = emb.embed(e2)
    k = z1.shape[1]
    if z2.shape[1] != k:
        raise ValueError(f"embedded dimensions differ: {k} vs {z2.shape[1]}")
    if z1.shape[0] < k + 1 or z2.shape[0] < k + 1:
        raise ValueError(f"need at least {k + 1} samples per ensemble for a "
                         f"{k}-dim covariance, got {z1.shape[0]} and {z2.shape[0]}")

    def fid(x1, x2):
        return _frechet_from_moments(x1.mean(axis=0), np.cov(x1, rowvar=False),
                                     x2.mean(axis=0), np.cov(x2, rowvar=False))

    value = fid(z1, z2)
    if not error_bars:
        return value
    rng = np.random.default_rng(seed)
    m1 = max(k + 1, int(round(frac * z1.shape[0])))
    m2 = max(k + 1, int(round(frac * z2.shape[0])))
    sub = [fid(z1[rng.choice(z1.shape[0], size=m1, replace=False)],
               z2[rng.choice(z2.shape[0], size=m2, replace=False)])
           for _ in range(draws)]
    return value, float(np.std(sub))


def _diag_squared_pool(mats: list[DistanceMatrix], s: int) -> np.ndarray:
    """All s-th diagonal entries across the ensemble, as squared distances."""
    rows = []
    for m in mats:
        d = np.diagonal(m.values, offset=s)
        rows.append(d if m.squared else d ** 2)
    return np.concatenate(rows)


def scaling_exponent(ensemble, fit_range: tuple[int, int] | None = None):
    """Least-squares scaling exponent of the typical distance vs separation.

    x(s) is the root mean square distance over the ensemble at index
    separation s; the returned exponent is the slope of log x vs log s over
    s in [2, n//4] by default (pass fit_range to override). Also returns the
    full curve [(s, x(s)) for s in 1..n-1].
    """
    mats = [e if isinstance(e, DistanceMatrix) else DistanceMatrix(values=np.asarray(e, dtype=np.float64))
            for e in (list(ensemble) if not isinstance(ensemble, np.ndarray) else ensemble)]
    if not mats:
        raise ValueError("ensemble is empty")
    n = mats[0].n
    curve = []
    for s in range(1, n):
        pool = _diag_squared_pool(mats, s)
        curve.append((s, float(np.sqrt(pool.mean()))))
    lo, hi = fit_range if fit_range is not None else (2, n // 4)
    pts = [(s, x) for s, x in curve if lo <= s <= hi]
    if len(pts) < 2:
        raise ValueError(f"fit window [{lo}, {hi}] has {len(pts)} points; need >= 2")
    ls = np.log([s for s, _ in pts])
    lx = np.log([x for _, x in pts])
    slope, _ = np.polyfit(ls, lx, 1)
    return float(slope), curve


@dataclass
class CollapseReport:
    s: int
    ks: float
    threshold: float
    n_matrices: int
    n_pooled: int
    passed: bool


def gaussian_collapse(ensemble, s_values, dim: int = 3, alpha: float = 0.01) -> list[CollapseReport]:
    """Shape test for the rescaled squared-distance distribution per separation.

    If coordinates are Gaussian, the squared distance at separation s is a
    scaled chi-squared with `dim` degrees of freedom, so
    z = dim * x^2 / mean(x^2) must follow chi2(dim). The KS decision uses the
    matrix count (independent samples), not the pooled entry count: entries
    pooled along one diagonal of the same matrix are correlated, so the
    pooled count would overstate the evidence and fail exact ensembles.
    """
    mats = list(ensemble)
    if not mats:
        raise ValueError("ensemble is empty")
    reports = []
    for s in s_values:
        pool = _diag_squared_pool(mats, int(s))
        z = dim * pool / pool.mean()
        ks = float(stats.kstest(z, stats.chi2(dim).cdf).statistic)
        threshold = float(np.sqrt(-np.log(alpha / 2) / 2) / np.sqrt(len(mats)))
        reports.append(CollapseReport(s=int(s), ks=ks, threshold=threshold,
                                      n_matrices=len(mats), n_pooled=pool.size,
                                      passed=ks < threshold))
    return reports


@dataclass
class FidScalingFit:
    a: float
    gamma: float
    log10_m_star: float
    residuals: np.ndarray = field(repr=False)
    intercept: float = 0.0


def fid_scaling_fit(points, reference: tuple[float, float] | None = None) -> FidScalingFit:
    """Fit fid = C * mu^a * M^(-gamma) by least squares in log10 space.

    points: iterable of (M, mu, fid), all positive, at least 4 of them and at
    least two distinct values in each of M and mu (otherwise the design is
    degenerate). reference, when given, is a (mu_ref, fid_ref) pair: the fit
    is rescaled by mu^-a and extrapolated to that level, yielding
    log10_m_star; without it log10_m_star is nan.
    """
    pts = np.asarray(list(points), dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must be (M, mu, fid) triples, got shape {pts.shape}")
    if pts.shape[0] < 4:
        raise ValueError(f"need at least 4 points, got {pts.shape[0]}")
    if (pts <= 0).any():
        raise ValueError("all of M, mu, fid must be positive")
    m, mu, fid = pts.T
    design = np.column_stack([np.log10(mu), -np.log10(m), np.ones_like(mu)])
    if np.linalg.matrix_rank(design) < 3:
        raise ValueError("degenerate design: need at least two distinct M and two distinct mu")
    coef, *_ = np.linalg.lstsq(design, np.log10(fid), rcond=None)
    a, gamma, c = (float(v) for v in coef)
    residuals = np.log10(fid) - design @ coef
    log10_m_star = float("nan")
    if reference is not None:
        mu_ref, fid_ref = reference
        if mu_ref <= 0 or fid_ref <= 0:
            raise ValueError("reference (mu, fid) must be positive")
        level = np.log10(fid_ref) - a * np.log10(mu_ref)
        log10_m_star = (c - level) / gamma
    return FidScalingFit(a=a, gamma=gamma, log10_m_star=log10_m_star,
                         residuals=residuals, intercept=c)


def theoretical_m_star(n: int) -> float:
    """Entropy-based log10 database-size bound for an n-point ensemble."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    return 2.0 * (n - 1) * (np.log(np.sqrt(2.0 * np.pi)) + 0.5) / np.log(10.0)


def metric_report(metric: str, value, error=None, config: dict | None = None,
                  digests: dict | None = None) -> dict:
    """Uniform JSON-ready report for one metric evaluation."""
    return {"metric": metric, "value": value, "error": error,
            "config": config or {}, "digests": digests or {}}
