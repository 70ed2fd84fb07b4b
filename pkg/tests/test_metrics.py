"""Metrics: masked RMSE, Frechet distance, scaling fits, shape tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edmkit.edm import DistanceMatrix, Mask, edm_from_trajectory, random_mask
from edmkit.fbm import FbmParams, generate_fbm
from edmkit.metrics import (
    CollapseReport,
    EnsembleEmbedding,
    FrechetError,
    _frechet_from_moments,
    fid_scaling_fit,
    frechet_distance,
    gaussian_collapse,
    metric_report,
    rmse_masked,
    scaling_exponent,
    theoretical_m_star,
)


def _fbm_mats(h=0.5, n=32, count=400, seed=3):
    traj = generate_fbm(FbmParams(hurst=h, n_points=n, dim=3), count, seed=seed)
    return [edm_from_trajectory(t) for t in traj]


# ---------------------------------------------------------------------------
# rmse_masked

def test_rmse_identical_is_zero():
    m = _fbm_mats(count=1)[0]
    mask = random_mask(m.n, 0.4, seed=0)
    assert rmse_masked(m, m, mask) == 0.0


def test_rmse_single_entry_hand_value():
    # one hidden off-diagonal pair, raw distances 3 vs 7 -> RMSE 4; stored
    # squared, so entries are 9 and 49
    a = np.zeros((3, 3))
    b = np.zeros((3, 3))
    a[0, 1] = a[1, 0] = 9.0
    b[0, 1] = b[1, 0] = 49.0
    bits = 1 - np.eye(3, dtype=np.uint8)
    bits[0, 1] = bits[1, 0] = 0
    got = rmse_masked(DistanceMatrix(values=a), DistanceMatrix(values=b), Mask(bits=bits))
    assert got == pytest.approx(4.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31))
def test_rmse_matches_double_loop(seed):
    rng = np.random.default_rng(seed)
    n = 8
    pts = rng.standard_normal((n, 3))
    a = edm_from_trajectory(pts)
    noisy = DistanceMatrix(values=np.abs(a.values + rng.normal(0, 0.1, (n, n)) * (1 - np.eye(n))))
    sym = (noisy.values + noisy.values.T) / 2
    np.fill_diagonal(sym, 0.0)
    noisy = DistanceMatrix(values=sym)
    mask = random_mask(n, 0.5, seed=seed)
    total, cnt = 0.0, 0
    for i in range(n):
        for j in range(n):
            if i != j and mask.bits[i, j] == 0:
                total += (np.sqrt(noisy.values[i, j]) - np.sqrt(a.values[i, j])) ** 2
                cnt += 1
    if cnt == 0:
        return
    assert rmse_masked(noisy, a, mask) == pytest.approx(np.sqrt(total / cnt), rel=1e-12)


def test_rmse_permutation_invariant():
    mats = _fbm_mats(count=2, n=16, seed=9)
    a, b = mats[0], mats[1]
    mask = random_mask(16, 0.5, seed=1)
    base = rmse_masked(a, b, mask)
    rng = np.random.default_rng(4)
    p = rng.permutation(16)
    pa = DistanceMatrix(values=a.values[np.ix_(p, p)])
    pb = DistanceMatrix(values=b.values[np.ix_(p, p)])
    pm = Mask(bits=mask.bits[np.ix_(p, p)])
    assert rmse_masked(pa, pb, pm) == pytest.approx(base, rel=1e-12)


def test_rmse_errors():
    m = _fbm_mats(count=1, n=8)[0]
    full = Mask(bits=(1 - np.eye(8)).astype(np.uint8))
    with pytest.raises(ValueError, match="hides no"):
        rmse_masked(m, m, full)
    small = _fbm_mats(count=1, n=6)[0]
    with pytest.raises(ValueError, match="shapes"):
        rmse_masked(m, small, random_mask(8, 0.3, seed=0))


# ---------------------------------------------------------------------------
# frechet_distance

def test_frechet_identical_zero():
    mats = _fbm_mats(n=8, count=80, seed=5)
    emb = EnsembleEmbedding.fit_pca(mats, dim=5)
    assert frechet_distance(mats, mats, emb) == pytest.approx(0.0, abs=1e-8)


def test_frechet_1d_gaussians_closed_form():
    # construct samples whose SAMPLE moments are exactly (0,1) and (1,1);
    # the closed form then gives (0-1)^2 + 1 + 1 - 2 = 1
    rng = np.random.default_rng(0)
    z = rng.standard_normal(200)
    z = (z - z.mean()) / z.std(ddof=1)
    e1 = z.reshape(-1, 1)
    e2 = (z + 1.0).reshape(-1, 1)
    assert frechet_distance(e1, e2) == pytest.approx(1.0, abs=1e-10)


def test_frechet_matches_spectral_oracle():
    # independent evaluation: tr((C1 C2)^{1/2}) via the eigenvalues of the
    # (non-symmetric) product, which are real and nonnegative for PSD factors
    rng = np.random.default_rng(7)
    x1 = rng.standard_normal((300, 5)) @ rng.standard_normal((5, 5)) + rng.standard_normal(5)
    x2 = rng.standard_normal((300, 5)) @ rng.standard_normal((5, 5))
    got = frechet_distance(x1, x2)
    mu1, mu2 = x1.mean(axis=0), x2.mean(axis=0)
    c1 = np.cov(x1, rowvar=False)
    c2 = np.cov(x2, rowvar=False)
    ev = np.linalg.eigvals(c1 @ c2)
    want = ((mu1 - mu2) @ (mu1 - mu2) + np.trace(c1) + np.trace(c2)
            - 2 * np.sqrt(np.clip(ev.real, 0, None)).sum())
    assert got == pytest.approx(want, abs=1e-8)


def test_frechet_symmetric():
    rng = np.random.default_rng(1)
    x1 = rng.standard_normal((50, 4))
    x2 = rng.standard_normal((50, 4)) + 0.5
    assert frechet_distance(x1, x2) == pytest.approx(frechet_distance(x2, x1), rel=1e-10)


def test_frechet_sample_count_precondition():
    rng = np.random.default_rng(2)
    with pytest.raises(ValueError, match="at least"):
        frechet_distance(rng.standard_normal((4, 4)), rng.standard_normal((50, 4)))


def test_frechet_error_bars_option():
    rng = np.random.default_rng(3)
    x1 = rng.standard_normal((120, 3))
    x2 = rng.standard_normal((120, 3)) + 0.3
    value, err = frechet_distance(x1, x2, error_bars=True, draws=30, seed=0)
    assert value == pytest.approx(frechet_distance(x1, x2))
    assert err > 0


def test_frechet_negative_spectrum_raises():
    bad = np.diag([1.0, -2.0])
    good = np.eye(2)
    with pytest.raises(FrechetError, match="eigenvalues"):
        _frechet_from_moments(np.zeros(2), bad, np.zeros(2), good)


# ---------------------------------------------------------------------------
# EnsembleEmbedding

def test_pca_fit_orthonormal_and_provenance():
    mats = _fbm_mats(n=8, count=100, seed=11)
    emb = EnsembleEmbedding.fit_pca(mats, dim=6)
    gram = emb.basis @ emb.basis.T
    assert np.abs(gram - np.eye(6)).max() < 1e-8
    assert emb.dim == 6
    assert len(emb.provenance) == 16
    named = EnsembleEmbedding.fit_pca(mats, dim=6, provenance="ref-1")
    assert named.provenance == "ref-1"


def test_pca_first_component_captures_most_variance():
    mats = _fbm_mats(n=8, count=150, seed=12)
    emb = EnsembleEmbedding.fit_pca(mats, dim=4)
    z = emb.embed(mats)
    var = z.var(axis=0)
    assert np.all(np.diff(var) <= 1e-9)


def test_pca_roundtrip(tmp_path):
    mats = _fbm_mats(n=8, count=60, seed=13)
    emb = EnsembleEmbedding.fit_pca(mats, dim=3)
    p = tmp_path / "emb.pcae"
    emb.save(p)
    back = EnsembleEmbedding.load(p, provenance=emb.provenance)
    # storage is f32, so projections agree to f32 resolution
    assert np.allclose(back.embed(mats), emb.embed(mats), rtol=0, atol=1e-4)


def test_identity_embedding_flattens():
    mats = _fbm_mats(n=6, count=3, seed=14)
    z = EnsembleEmbedding.identity().embed(mats)
    assert z.shape == (3, 36)
    assert np.array_equal(z[0], mats[0].values.ravel())


def test_embedding_validation():
    with pytest.raises(ValueError, match="kind"):
        EnsembleEmbedding(kind="nope")
    with pytest.raises(ValueError, match="orthonormal"):
        EnsembleEmbedding(kind="pca", mean=np.zeros(3), basis=np.ones((2, 3)))
    mats = _fbm_mats(n=6, count=10, seed=15)
    with pytest.raises(ValueError, match="more than"):
        EnsembleEmbedding.fit_pca(mats, dim=10)
    emb = EnsembleEmbedding.fit_pca(mats, dim=4)
    with pytest.raises(ValueError, match="does not match"):
        emb.embed(_fbm_mats(n=8, count=5, seed=16))


# ---------------------------------------------------------------------------
# scaling_exponent

def test_scaling_collinear_points_slope_one():
    pts = np.zeros((16, 3))
    pts[:, 0] = np.arange(16) * 2.0
    dm = edm_from_trajectory(pts)
    h, curve = scaling_exponent([dm])
    assert abs(h - 1.0) < 1e-12
    assert len(curve) == 15
    assert curve[0][1] == pytest.approx(2.0)


def test_scaling_recovers_hurst():
    for h_true in (1 / 3, 0.5):
        mats = _fbm_mats(h=h_true, n=64, count=1500, seed=21)
        h_hat, _ = scaling_exponent(mats)
        assert abs(h_hat - h_true) < 0.02


def test_scaling_fit_range_override():
    mats = _fbm_mats(h=0.5, n=32, count=200, seed=22)
    h_default, _ = scaling_exponent(mats)
    h_wide, _ = scaling_exponent(mats, fit_range=(2, 16))
    assert abs(h_default - 0.5) < 0.05 and abs(h_wide - 0.5) < 0.05
    assert h_default != h_wide


def test_scaling_errors():
    with pytest.raises(ValueError, match="empty"):
        scaling_exponent([])
    tiny = _fbm_mats(n=6, count=2, seed=23)
    with pytest.raises(ValueError, match="window"):
        scaling_exponent(tiny)


# ---------------------------------------------------------------------------
# gaussian_collapse

def test_collapse_exact_ensemble_passes():
    mats = _fbm_mats(h=0.5, n=32, count=600, seed=24)
    reports = gaussian_collapse(mats, [4, 8, 16])
    assert all(r.passed for r in reports)
    assert [r.s for r in reports] == [4, 8, 16]
    assert reports[0].n_pooled == 600 * (32 - 4)
    assert all(isinstance(r, CollapseReport) for r in reports)


def test_collapse_detects_doubled_variance():
    mats = _fbm_mats(h=0.5, n=32, count=600, seed=25)
    bad = []
    for i, m in enumerate(mats):
        v = m.values.copy()
        if i % 2 == 0:
            idx = np.arange(32 - 8)
            v[idx, idx + 8] *= 4.0
            v[idx + 8, idx] *= 4.0
        bad.append(DistanceMatrix(values=v))
    reports = {r.s: r for r in gaussian_collapse(bad, [4, 8, 16])}
    assert not reports[8].passed
    assert reports[4].passed and reports[16].passed


def test_collapse_empty_s_list():
    mats = _fbm_mats(n=8, count=5, seed=26)
    assert gaussian_collapse(mats, []) == []


def test_collapse_empty_ensemble_raises():
    with pytest.raises(ValueError, match="empty"):
        gaussian_collapse([], [4])


# ---------------------------------------------------------------------------
# fid_scaling_fit / theoretical_m_star

def _synthetic_points(a=1.41, gamma=0.026, c=0.8):
    m = np.array([1e2, 1e3, 1e4, 1e2, 1e3, 1e4, 1e5, 1e6])
    mu = np.array([0.3, 0.3, 0.3, 0.6, 0.6, 0.6, 0.45, 0.45])
    fid = 10 ** c * mu ** a * m ** (-gamma)
    return np.column_stack([m, mu, fid])


def test_fid_fit_recovers_exact_parameters():
    fit = fid_scaling_fit(_synthetic_points())
    assert abs(fit.a - 1.41) < 1e-6
    assert abs(fit.gamma - 0.026) < 1e-6
    assert np.abs(fit.residuals).max() < 1e-9
    assert np.isnan(fit.log10_m_star)


def test_fid_fit_m_star_extrapolation():
    # reference chosen so the rescaled level sits exactly at log10 M* = 20
    a, gamma, c = 1.41, 0.026, 0.8
    level = c - gamma * 20
    fid_ref = 10 ** (level + a * np.log10(0.5))
    fit = fid_scaling_fit(_synthetic_points(a, gamma, c), reference=(0.5, fid_ref))
    assert fit.log10_m_star == pytest.approx(20.0, abs=1e-9)


def test_fid_fit_errors():
    pts = _synthetic_points()
    with pytest.raises(ValueError, match="at least 4"):
        fid_scaling_fit(pts[:3])
    neg = pts.copy()
    neg[0, 2] = -1
    with pytest.raises(ValueError, match="positive"):
        fid_scaling_fit(neg)
    single_mu = pts.copy()
    single_mu[:, 1] = 0.5
    with pytest.raises(ValueError, match="degenerate"):
        fid_scaling_fit(single_mu)


def test_theoretical_m_star_values():
    # direct evaluations of 2(n-1)(ln sqrt(2 pi) + 1/2)/ln 10
    assert theoretical_m_star(2) == pytest.approx(1.2324743502613666, abs=1e-12)
    assert theoretical_m_star(64) == pytest.approx(77.64588406646611, abs=1e-9)
    assert theoretical_m_star(65) == pytest.approx(78.87835841672747, abs=1e-9)
    with pytest.raises(ValueError):
        theoretical_m_star(1)


def test_metric_report_shape():
    rep = metric_report("rmse", 0.5, error=0.1, config={"n": 8}, digests={"in": "ab"})
    assert rep == {"metric": "rmse", "value": 0.5, "error": 0.1,
                   "config": {"n": 8}, "digests": {"in": "ab"}}
