"""End-to-end tests for the command-line workbench, run in-process."""

import csv
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from edmkit.cli import main
from edmkit.containers import load_edm_batch, load_mask_batch
from edmkit.diffusion.schedules import linear_schedule
from edmkit.diffusion.unet import tensor_inventory
from edmkit.diffusion.weights import NormalizationSpec, save_predictor
from edmkit.edm import DistanceMatrix, Mask
from edmkit.metrics import rmse_masked

FIXTURE = Path(__file__).parent / "data" / "chr21_cell373.tsv"


def run(capsys, *argv):
    rc = main([str(a) for a in argv])
    out = capsys.readouterr()
    summary = json.loads(out.out.strip()) if out.out.strip() else None
    return rc, summary, out.err


def _gen(capsys, tmp_path, name="gen", hurst=0.5, n=16, count=8, seed=3,
         **extra):
    args = ["generate", "--hurst", hurst, "--n", n, "--count", count,
            "--seed", seed, "--out", tmp_path / name]
    for k, v in extra.items():
        args += [f"--{k}"] if v == "" else [f"--{k}", v]
    rc, summary, err = run(capsys, *args)
    assert rc == 0, err
    return tmp_path / name / "edms.edmd", summary


def _toy_model(path, n=16, c=8, T=30, seed=0, mu=8.0, sigma=6.0, hurst=0.5):
    rng = np.random.default_rng(seed)
    tensors = {k: 0.05 * rng.standard_normal(v)
               for k, v in tensor_inventory(c).items()}
    save_predictor(path, tensors, linear_schedule(T),
                   NormalizationSpec(mu=mu, sigma=sigma, hurst=hurst, n=n),
                   n=n, base_channels=c, groups=4)
    return path


def test_generate_writes_dataset_and_sidecar(capsys, tmp_path):
    path, summary = _gen(capsys, tmp_path, traj="")
    assert summary["command"] == "generate"
    assert summary["count"] == 8 and summary["n"] == 16
    batch = load_edm_batch(path)
    assert batch.values.shape == (8, 16, 16)
    assert batch.hurst == 0.5 and batch.squared
    sidecar = json.loads((tmp_path / "gen" / "generate_config.json").read_text())
    assert sidecar["command"] == "generate"
    assert sidecar["hurst"] == 0.5 and sidecar["seed"] == 3
    assert (tmp_path / "gen" / "trajectories.traj").exists()


def test_generate_traj_flag_spelled_plainly(capsys, tmp_path):
    rc, summary, _ = run(capsys, "generate", "--hurst", 0.5, "--n", 16,
                         "--count", 2, "--traj", "--out", tmp_path / "g2")
    assert rc == 0
    assert str(tmp_path / "g2" / "trajectories.traj") in summary["files"]


def test_generate_deterministic_by_seed(capsys, tmp_path):
    p1, _ = _gen(capsys, tmp_path, "a", seed=9)
    p2, _ = _gen(capsys, tmp_path, "b", seed=9)
    p3, _ = _gen(capsys, tmp_path, "c", seed=10)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_bytes() != p3.read_bytes()


def test_generate_rejects_bad_hurst(capsys, tmp_path):
    rc, summary, err = run(capsys, "generate", "--hurst", 1.5, "--n", 16,
                           "--count", 2, "--out", tmp_path / "bad")
    assert rc == 1
    assert summary is None
    assert "hurst" in err


def test_mask_command(capsys, tmp_path):
    rc, summary, err = run(capsys, "mask", "--n", 16, "--mu", 0.3,
                           "--count", 6, "--seed", 1, "--check-rigid",
                           "--out", tmp_path / "m")
    assert rc == 0, err
    bits = load_mask_batch(tmp_path / "m" / "masks.mask")
    assert bits.shape == (6, 16, 16)
    assert abs(summary["mu_mean"] - 0.3) < 0.1
    assert 0.0 <= summary["rigid_fraction"] <= 1.0


def test_mask_rows_option(capsys, tmp_path):
    rc, summary, _ = run(capsys, "mask", "--n", 8, "--rows", "1,4",
                         "--out", tmp_path / "mr")
    assert rc == 0
    bits = load_mask_batch(tmp_path / "mr" / "masks.mask")
    assert bits.shape[0] == 1
    assert not bits[0, 1].any() and not bits[0, :, 4].any()
    assert bits[0, 2, 3] == 1


def _full_mask_file(capsys, tmp_path, n):
    rc, _, _ = run(capsys, "mask", "--n", n, "--mu", 0.0,
                   "--out", tmp_path / "full")
    assert rc == 0
    return tmp_path / "full" / "masks.mask"


def test_complete_fista_all_known_is_identity(capsys, tmp_path):
    data, _ = _gen(capsys, tmp_path)
    masks = _full_mask_file(capsys, tmp_path, 16)
    rc, summary, err = run(capsys, "complete", "--data", data, "--masks",
                           masks, "--method", "fista",
                           "--out", tmp_path / "cf")
    assert rc == 0, err
    done = load_edm_batch(tmp_path / "cf" / "completed.edmd")
    np.testing.assert_array_equal(done.values, load_edm_batch(data).values)


def test_complete_nn_scores_instances(capsys, tmp_path):
    data, _ = _gen(capsys, tmp_path)
    rc, _, _ = run(capsys, "mask", "--n", 16, "--mu", 0.4, "--count", 8,
                   "--seed", 2, "--out", tmp_path / "mm")
    assert rc == 0
    rc, summary, err = run(capsys, "complete", "--data", data, "--masks",
                           tmp_path / "mm" / "masks.mask", "--method", "nn",
                           "--out", tmp_path / "cn")
    assert rc == 0, err
    assert summary["rmse_mean"] > 0 and summary["rmse_err"] > 0
    with open(tmp_path / "cn" / "per_instance.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8
    # summary matches an independent recomputation from the artifacts
    truth = load_edm_batch(data)
    done = load_edm_batch(tmp_path / "cn" / "completed.edmd")
    bits = load_mask_batch(tmp_path / "mm" / "masks.mask")
    vals = [rmse_masked(DistanceMatrix(values=d, squared=True),
                        DistanceMatrix(values=t, squared=True), Mask(bits=b))
            for d, t, b in zip(done.values, truth.values, bits)]
    assert summary["rmse_mean"] == pytest.approx(np.mean(vals), rel=1e-9)


def test_complete_db_member_queries_are_exact(capsys, tmp_path):
    data, _ = _gen(capsys, tmp_path, count=12)
    rc, _, _ = run(capsys, "mask", "--n", 16, "--mu", 0.5, "--count", 12,
                   "--seed", 5, "--out", tmp_path / "md")
    assert rc == 0
    rc, summary, err = run(capsys, "complete", "--data", data, "--masks",
                           tmp_path / "md" / "masks.mask", "--method", "db",
                           "--db", data, "--out", tmp_path / "cd")
    assert rc == 0, err
    assert summary["rmse_mean"] == pytest.approx(0.0, abs=1e-12)


def test_complete_requires_model_for_diffusion(capsys, tmp_path):
    data, _ = _gen(capsys, tmp_path, count=2)
    masks = _full_mask_file(capsys, tmp_path, 16)
    rc, _, err = run(capsys, "complete", "--data", data, "--masks", masks,
                     "--method", "repaint", "--out", tmp_path / "ce")
    assert rc == 1 and "--model" in err


def test_complete_diffusion_end_to_end(capsys, tmp_path):
    data, _ = _gen(capsys, tmp_path, count=3)
    rc, _, _ = run(capsys, "mask", "--n", 16, "--mu", 0.3, "--count", 3,
                   "--seed", 4, "--out", tmp_path / "mx")
    assert rc == 0
    model = _toy_model(tmp_path / "toy.epsw")
    rc, summary, err = run(capsys, "complete", "--data", data, "--masks",
                           tmp_path / "mx" / "masks.mask", "--method", "ddrm",
                           "--model", model, "--substeps", 8,
                           "--out", tmp_path / "cdif")
    assert rc == 0, err
    done = load_edm_batch(tmp_path / "cdif" / "completed.edmd")
    assert done.values.shape == (3, 16, 16)
    assert np.isfinite(done.values).all()


def test_sample_command(capsys, tmp_path):
    model = _toy_model(tmp_path / "toy.epsw")
    rc, summary, err = run(capsys, "sample", "--model", model, "--count", 4,
                           "--seed", 1, "--substeps", 10,
                           "--out", tmp_path / "s")
    assert rc == 0, err
    batch = load_edm_batch(tmp_path / "s" / "samples.edmd")
    assert batch.values.shape == (4, 16, 16)
    assert batch.squared and batch.hurst == 0.5
    assert (batch.values >= 0).all()
    assert summary["n"] == 16
    assert (tmp_path / "s" / "sample_config.json").exists()


def test_metrics_scaling_recovers_hurst(capsys, tmp_path):
    data, _ = _gen(capsys, tmp_path, hurst=1 / 3, n=32, count=400, seed=7)
    rc, summary, err = run(capsys, "metrics", "--metric", "scaling",
                           "--data", data, "--out", tmp_path / "ms")
    assert rc == 0, err
    assert abs(summary["value"] - 1 / 3) < 0.04
    with open(tmp_path / "ms" / "scaling_curve.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 31


def test_metrics_rmse_matches_library(capsys, tmp_path):
    a, _ = _gen(capsys, tmp_path, "da", seed=1)
    b, _ = _gen(capsys, tmp_path, "db", seed=2)
    rc, _, _ = run(capsys, "mask", "--n", 16, "--mu", 0.4, "--count", 8,
                   "--seed", 3, "--out", tmp_path / "mr2")
    assert rc == 0
    rc, summary, err = run(capsys, "metrics", "--metric", "rmse", "--a", a,
                           "--b", b, "--masks", tmp_path / "mr2" / "masks.mask",
                           "--out", tmp_path / "mm2")
    assert rc == 0, err
    va = load_edm_batch(a).values
    vb = load_edm_batch(b).values
    bits = load_mask_batch(tmp_path / "mr2" / "masks.mask")
    expect = np.mean([rmse_masked(DistanceMatrix(values=x, squared=True),
                                  DistanceMatrix(values=y, squared=True),
                                  Mask(bits=m))
                      for x, y, m in zip(va, vb, bits)])
    assert summary["value"] == pytest.approx(expect, rel=1e-9)


def test_metrics_fid_identical_sets_is_zero(capsys, tmp_path):
    data, _ = _gen(capsys, tmp_path, count=20, n=16)
    rc, summary, err = run(capsys, "metrics", "--metric", "fid", "--a", data,
                           "--b", data, "--pca", 8, "--out", tmp_path / "mf")
    assert rc == 0, err
    assert summary["value"] == pytest.approx(0.0, abs=1e-6)
    assert summary["embedding_dim"] == 8


def test_metrics_collapse_on_exact_ensemble(capsys, tmp_path):
    data, _ = _gen(capsys, tmp_path, hurst=0.5, n=32, count=300, seed=11)
    rc, summary, err = run(capsys, "metrics", "--metric", "collapse",
                           "--data", data, "--s", "4,8", "--out",
                           tmp_path / "mc")
    assert rc == 0, err
    assert summary["passed"] is True
    assert set(summary["ks"]) == {"4", "8"}


def test_metrics_rank_on_exact_edms(capsys, tmp_path):
    data, _ = _gen(capsys, tmp_path, n=24, count=10)
    rc, summary, err = run(capsys, "metrics", "--metric", "rank",
                           "--data", data, "--r", 5, "--out", tmp_path / "mk")
    assert rc == 0, err
    assert summary["min"] > 0.99
    assert summary["value"] >= summary["min"]


def test_metrics_fidfit_recovers_power_law(capsys, tmp_path):
    a_true, gamma_true, c = 1.41, 0.026, 1.0
    rows = [("mu", "m", "fid")]
    for mu in (0.05, 0.1, 0.15, 0.19, 0.24):
        for m in (500, 1000, 2000, 5000):
            fid = 10 ** (a_true * np.log10(mu) - gamma_true * np.log10(m) + c)
            rows.append((mu, m, fid))
    pts = tmp_path / "points.csv"
    pts.write_text("\n".join(",".join(str(v) for v in r) for r in rows) + "\n")
    rc, summary, err = run(capsys, "metrics", "--metric", "fidfit",
                           "--points", pts, "--n", 65,
                           "--out", tmp_path / "mfit")
    assert rc == 0, err
    assert summary["a"] == pytest.approx(1.41, abs=1e-6)
    assert summary["gamma"] == pytest.approx(0.026, abs=1e-6)
    assert summary["log10_m_star_theoretical"] == pytest.approx(78.8784, abs=1e-3)


def test_fish_impute_nn(capsys, tmp_path):
    table = tmp_path / "table.tsv"
    shutil.copy(FIXTURE, table)
    rc, summary, err = run(capsys, "fish", "--input", table, "--method", "nn",
                           "--drop-indices", "1,3,14,23,26,39,43,51,59,61",
                           "--out", tmp_path / "fi")
    assert rc == 0, err
    assert summary["cells"] == 1
    assert summary["rmse_mean"] > 0
    batch = load_edm_batch(tmp_path / "fi" / "completed.edmd")
    assert not batch.squared          # stored as raw nm distances
    assert batch.values.shape == (1, 65, 65)


def test_fish_select_filter_can_empty(capsys, tmp_path):
    table = tmp_path / "table.tsv"
    shutil.copy(FIXTURE, table)
    rc, summary, err = run(capsys, "fish", "--input", table, "--method", "nn",
                           "--select-missing", 15, "--drop", 5,
                           "--out", tmp_path / "fs")
    assert rc == 0, err
    assert summary["cells"] == 1      # the bundled cell has 15 absent probes
    rc, _, err = run(capsys, "fish", "--input", table, "--method", "nn",
                     "--select-missing", 3, "--out", tmp_path / "fs2")
    assert rc == 1 and "no cells" in err


def test_fish_scaling_task(capsys, tmp_path):
    table = tmp_path / "table.tsv"
    shutil.copy(FIXTURE, table)
    rc, summary, err = run(capsys, "fish", "--input", table, "--task",
                           "scaling", "--out", tmp_path / "fsc")
    assert rc == 0, err
    assert np.isfinite(summary["slope"])
    assert (tmp_path / "fsc" / "fish_scaling.csv").exists()


def test_sweep_grid_resume_and_edges(capsys, tmp_path):
    data, _ = _gen(capsys, tmp_path, count=6)
    args = ("sweep", "--data", data, "--methods", "nn", "--mu", "0.2,0.6",
            "--count", 4, "--seed", 2, "--out", tmp_path / "sw")
    rc, summary, err = run(capsys, *args)
    assert rc == 0, err
    assert summary["cells_done"] == 2
    csv_path = tmp_path / "sw" / "sweep.csv"
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["mu"] for r in rows] == ["0.2", "0.6"]
    assert all(float(r["rmse"]) > 0 for r in rows)
    before = csv_path.read_bytes()
    rc, summary, _ = run(capsys, *args)
    assert rc == 0
    assert summary["cells_done"] == 0 and summary["cells_skipped"] == 2
    assert csv_path.read_bytes() == before
    # edge missing ratios: mu=0 scores trivially, mu=1 is recorded as failed
    rc, summary, _ = run(capsys, "sweep", "--data", data, "--methods", "nn",
                         "--mu", "0,1", "--count", 3, "--seed", 2,
                         "--out", tmp_path / "swe")
    assert rc == 1
    assert summary["cells_done"] == 1
    assert summary["failed"][0]["mu"] == 1.0
    with open(tmp_path / "swe" / "sweep.csv", newline="") as fh:
        edge_rows = list(csv.DictReader(fh))
    assert len(edge_rows) == 1 and float(edge_rows[0]["mu"]) == 0.0
    assert float(edge_rows[0]["rigid_fraction"]) == 1.0


def test_sweep_reproducible_from_sidecar(capsys, tmp_path):
    data, _ = _gen(capsys, tmp_path, count=5)
    rc, _, err = run(capsys, "sweep", "--data", data, "--methods", "nn,fista",
                     "--mu", "0.3", "--count", 3, "--seed", 8,
                     "--out", tmp_path / "s1")
    assert rc == 0, err
    rc, _, err = run(capsys, "sweep", "--config",
                     tmp_path / "s1" / "sweep_config.json",
                     "--out", tmp_path / "s2")
    assert rc == 0, err
    assert ((tmp_path / "s1" / "sweep.csv").read_bytes()
            == (tmp_path / "s2" / "sweep.csv").read_bytes())


def test_config_file_with_flag_override(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"hurst": 0.25, "count": 5, "n": 16}))
    rc, summary, err = run(capsys, "generate", "--config", cfg, "--count", 3,
                           "--out", tmp_path / "g")
    assert rc == 0, err
    assert summary["hurst"] == 0.25      # from config file
    assert summary["count"] == 3         # flag wins
    sidecar = json.loads((tmp_path / "g" / "generate_config.json").read_text())
    assert sidecar["hurst"] == 0.25 and sidecar["count"] == 3


def test_config_rejects_unknown_keys(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"hirst": 0.25}))
    rc, _, err = run(capsys, "generate", "--config", cfg,
                     "--out", tmp_path / "g")
    assert rc == 1 and "hirst" in err


def test_missing_out_is_an_error(capsys, tmp_path):
    rc, _, err = run(capsys, "mask", "--n", 8, "--mu", 0.2)
    assert rc == 1 and "--out" in err
