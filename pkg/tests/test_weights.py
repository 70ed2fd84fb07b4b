"""Tests for weight-file save/load, check-vector verification, and output
postprocessing."""

import numpy as np
import pytest

from edmkit.containers import ContainerError, load_epsw, save_epsw
from edmkit.diffusion.schedules import linear_schedule
from edmkit.diffusion.unet import UNetSmall, tensor_inventory
from edmkit.diffusion.weights import (NormalizationSpec, UNetPredictor,
                                      load_predictor, postprocess_edm,
                                      save_predictor)

N = 8
C = 8
G = 4


def _tensors(seed=0, scale=0.1):
    rng = np.random.default_rng(seed)
    return {k: scale * rng.standard_normal(v)
            for k, v in tensor_inventory(C).items()}


def _save(path, seed=0, T=25, check_vectors=None):
    save_predictor(path, _tensors(seed), linear_schedule(T),
                   NormalizationSpec(mu=1.5, sigma=0.7, hurst=0.5, n=N),
                   n=N, base_channels=C, groups=G, check_vectors=check_vectors)


def test_roundtrip_replays_check_vectors(tmp_path):
    path = tmp_path / "w.epsw"
    _save(path)
    pred = load_predictor(path)
    assert isinstance(pred, UNetPredictor)
    assert pred.n == N
    assert len(pred.schedule) == 25
    assert pred.normalization.mu == 1.5 and pred.normalization.sigma == 0.7
    assert len(pred.manifest["check_vectors"]) == 8
    # loaded net reproduces the recorded outputs exactly: the exporter
    # certified the f32-rounded tensors, which are what the file stores
    cv = pred.manifest["check_vectors"][0]
    got = pred.net.forward(np.asarray(cv["input"]), int(cv["t"]))
    np.testing.assert_array_equal(got, np.asarray(cv["output"]))


def test_loaded_predictor_evaluates(tmp_path):
    path = tmp_path / "w.epsw"
    _save(path, seed=3)
    pred = load_predictor(path, n=N)
    x = np.random.default_rng(1).standard_normal((N, N))
    out = pred.evaluate(x, 10)
    assert out.shape == (N, N)
    np.testing.assert_array_equal(out, pred.net.forward(x, 10))
    batch = pred.evaluate(np.stack([x, x + 1]), 5)
    assert batch.shape == (2, N, N)


def test_evaluate_rejects_timestep_outside_chain(tmp_path):
    path = tmp_path / "w.epsw"
    _save(path, T=25)
    pred = load_predictor(path)
    with pytest.raises(ValueError, match="timestep"):
        pred.evaluate(np.zeros((N, N)), 26)
    with pytest.raises(ValueError, match="timestep"):
        pred.evaluate(np.zeros((N, N)), 0)


def test_stale_check_vectors_rejected(tmp_path):
    # record check vectors from one net, store tensors from another
    probe = np.random.default_rng(2).standard_normal((N, N))
    other = {k: np.asarray(v, dtype=np.float32).astype(np.float64)
             for k, v in _tensors(seed=99).items()}
    stale = [{"input": probe.tolist(), "t": 4,
              "output": UNetSmall(other, n=N, base_channels=C,
                                  groups=G).forward(probe, 4).tolist()}]
    path = tmp_path / "w.epsw"
    _save(path, seed=0, check_vectors=stale)
    with pytest.raises(ContainerError, match="check vector"):
        load_predictor(path)


def test_missing_check_vectors_rejected(tmp_path):
    path = tmp_path / "w.epsw"
    _save(path, check_vectors=[])
    with pytest.raises(ContainerError, match="no check vectors"):
        load_predictor(path)


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "w.epsw"
    _save(path)
    data = path.read_bytes()
    path.write_bytes(data[:len(data) - 64])
    with pytest.raises(ContainerError):
        load_predictor(path)


def test_wrong_architecture_rejected(tmp_path):
    path = tmp_path / "w.epsw"
    _save(path)
    manifest, tensors = load_epsw(path)
    manifest["architecture"]["name"] = "unet-giant-v9"
    save_epsw(path, manifest, tensors)
    with pytest.raises(ContainerError, match="architecture"):
        load_predictor(path)


def test_size_mismatch_rejected(tmp_path):
    path = tmp_path / "w.epsw"
    _save(path)
    with pytest.raises(ContainerError, match="n=16"):
        load_predictor(path, n=16)


def test_inconsistent_tensor_table_rejected(tmp_path):
    path = tmp_path / "w.epsw"
    _save(path)
    manifest, tensors = load_epsw(path)
    del tensors["mid.res.conv2.bias"]
    save_epsw(path, manifest, tensors)
    with pytest.raises(ContainerError, match="tensor table"):
        load_predictor(path)


def test_subsampled_schedule_rejected_at_save(tmp_path):
    sub = linear_schedule(25).subsample([1, 5, 25])
    with pytest.raises(ValueError, match="full training schedule"):
        save_predictor(tmp_path / "w.epsw", _tensors(), sub,
                       NormalizationSpec(mu=0.0, sigma=1.0), n=N,
                       base_channels=C, groups=G)


def test_training_section_roundtrips_and_is_optional(tmp_path):
    info = {"seed": 7, "epochs": 3, "environment": {"torch": "x"}}
    save_predictor(tmp_path / "w.epsw", _tensors(), linear_schedule(25),
                   NormalizationSpec(mu=1.5, sigma=0.7), n=N,
                   base_channels=C, groups=G, training=info)
    manifest, _ = load_epsw(tmp_path / "w.epsw")
    assert manifest["training"] == info
    assert load_predictor(tmp_path / "w.epsw").manifest["training"] == info
    _save(tmp_path / "plain.epsw")
    plain, _ = load_epsw(tmp_path / "plain.epsw")
    assert "training" not in plain
    load_predictor(tmp_path / "plain.epsw")


def test_normalization_roundtrip_and_validation():
    ns = NormalizationSpec(mu=2.0, sigma=3.0)
    x = np.random.default_rng(0).standard_normal((4, 4))
    np.testing.assert_allclose(ns.denormalize(ns.normalize(x)), x,
                               rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(ns.normalize(np.full((2, 2), 2.0)), 0.0, atol=0)
    with pytest.raises(ValueError, match="sigma"):
        NormalizationSpec(mu=0.0, sigma=0.0)


def test_postprocess_clean_matrix_passes_through():
    from edmkit.edm import validate_edm
    rng = np.random.default_rng(4)
    pts = rng.standard_normal((6, 3))
    d2 = ((pts[:, None] - pts[None, :]) ** 2).sum(-1)
    ns = NormalizationSpec(mu=float(d2.mean()), sigma=float(d2.std()))
    dm, report = postprocess_edm(ns.normalize(d2), ns)
    assert dm.squared
    np.testing.assert_allclose(dm.values, d2, rtol=0, atol=1e-12)
    assert report["max_asymmetry"] < 1e-12
    assert report["max_clipped"] == 0.0
    assert validate_edm(dm, tol=1e-6).ok


def test_postprocess_repairs_and_reports():
    ns = NormalizationSpec(mu=0.0, sigma=1.0)
    raw = np.array([[0.5, 1.0, 4.0],
                    [1.4, 0.0, -0.6],
                    [4.0, -0.8, 0.0]])
    dm, report = postprocess_edm(raw, ns)
    v = dm.values
    np.testing.assert_array_equal(v, v.T)
    np.testing.assert_array_equal(np.diag(v), 0.0)
    assert (v >= 0).all()
    assert v[0, 1] == pytest.approx(1.2)         # symmetrized mean
    assert v[1, 2] == 0.0                        # clipped from -0.7
    assert report["max_asymmetry"] == pytest.approx(0.4)
    assert report["max_clipped"] == pytest.approx(0.7)


def test_postprocess_applies_denormalization():
    ns = NormalizationSpec(mu=10.0, sigma=2.0)
    raw = np.zeros((3, 3))
    dm, _ = postprocess_edm(raw, ns)
    off = ~np.eye(3, dtype=bool)
    np.testing.assert_array_equal(dm.values[off], 10.0)
    np.testing.assert_array_equal(np.diag(dm.values), 0.0)


def test_postprocess_rejects_bad_input():
    ns = NormalizationSpec(mu=0.0, sigma=1.0)
    with pytest.raises(ValueError, match="square"):
        postprocess_edm(np.zeros((2, 3)), ns)
    bad = np.zeros((3, 3))
    bad[0, 1] = np.nan
    with pytest.raises(ValueError, match="finite"):
        postprocess_edm(bad, ns)
