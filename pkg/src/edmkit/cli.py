"""Command-line workbench.

Subcommands cover the full pipeline: generate (fBm datasets), mask
(corruption masks), complete (classical and diffusion completion), sample
(unconditional generation), metrics (scoring), fish (chromatin imputation),
and sweep (the missing-ratio benchmark grid).

Every run prints a one-line JSON summary to stdout, writes its artifacts
under --out, and drops the fully resolved configuration next to them as
<command>_config.json so any run can be reproduced from its sidecar.
Parameters may come from a JSON config file (--config); explicit flags win.
Errors exit nonzero with a descriptive message on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import fish as fish_mod
from . import metrics as metrics_mod
from .complete import (db_search_complete, ensemble_mean_complete,
                       fista_complete, nn_complete, opt_complete)
from .containers import (atomic_write_text, load_edm_batch, load_mask_batch,
                         save_edm_batch, save_mask_batch,
                         save_trajectory_batch)
from .diffusion.samplers import ddpm_sample
from .diffusion.schedules import uniform_indices
from .diffusion.weights import load_predictor, postprocess_edm
from .edm import (DistanceMatrix, Mask, apply_mask, edm_from_trajectory,
                  random_mask, rank_fraction, row_col_mask)
from .fbm import FbmParams, generate_fbm
from .rigidity import is_rigid

COMPLETE_METHODS = ("fista", "opt", "nn", "db", "mean",
                    "ddpm", "repaint", "ddrm", "ddnm")
DIFFUSION_METHODS = ("ddpm", "repaint", "ddrm", "ddnm")
METRIC_CHOICES = ("rmse", "fid", "scaling", "collapse", "rank", "fidfit")

SWEEP_COLUMNS = ("mu", "method", "rmse", "rmse_err", "fid", "fid_err",
                 "rank", "rigid_fraction", "seed")


def _instance_seed(*parts) -> int:
    """Stable per-task seed derived from structured parts."""
    return int(np.random.SeedSequence(tuple(int(p) for p in parts))
               .generate_state(1)[0])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _parse_floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip() != ""]


def _parse_ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip() != ""]


def _out_dir(cfg) -> Path:
    if not cfg.get("out"):
        raise ValueError("--out directory is required")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_sidecar(out: Path, command: str, cfg: dict) -> None:
    doc = {"command": command}
    doc.update({k: _jsonable(v) for k, v in sorted(cfg.items())})
    atomic_write_text(out / f"{command}_config.json",
                      json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(header)
    w.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def _load_masks(path, n: int, count: int) -> list[Mask]:
    bits = load_mask_batch(path)
    if bits.shape[1] != n:
        raise ValueError(f"masks are {bits.shape[1]}x{bits.shape[2]}, "
                         f"data is {n}x{n}")
    masks = [Mask(bits=b) for b in bits]
    if len(masks) == 1 and count > 1:
        masks = masks * count
    if len(masks) != count:
        raise ValueError(f"{len(masks)} masks for {count} matrices")
    return masks


# ---------------------------------------------------------------------------
# generate

def cmd_generate(cfg: dict) -> dict:
    out = _out_dir(cfg)
    params = FbmParams(hurst=cfg["hurst"], n_points=cfg["n"], dim=cfg["dim"],
                       step_scale=cfg["step_scale"])
    trajs = generate_fbm(params, cfg["count"], seed=cfg["seed"])
    edms = np.stack([edm_from_trajectory(t).values for t in trajs])
    files = []
    edm_path = out / "edms.edmd"
    save_edm_batch(edm_path, edms, hurst=cfg["hurst"], squared=True)
    files.append(str(edm_path))
    if cfg["traj"]:
        traj_path = out / "trajectories.traj"
        save_trajectory_batch(traj_path, trajs, hurst=cfg["hurst"],
                              step_scale=cfg["step_scale"])
        files.append(str(traj_path))
    _write_sidecar(out, "generate", cfg)
    return {"command": "generate", "count": cfg["count"], "n": cfg["n"],
            "hurst": cfg["hurst"], "seed": cfg["seed"], "files": files}


# ---------------------------------------------------------------------------
# mask

def cmd_mask(cfg: dict) -> dict:
    out = _out_dir(cfg)
    n = cfg["n"]
    if cfg["rows"] is not None:
        masks = [row_col_mask(n, _parse_ints(cfg["rows"]))]
    else:
        masks = [random_mask(n, cfg["mu"], seed=_instance_seed(cfg["seed"], i))
                 for i in range(cfg["count"])]
    path = out / "masks.mask"
    save_mask_batch(path, np.stack([m.bits for m in masks]))
    summary = {"command": "mask", "count": len(masks), "n": n,
               "mu_mean": float(np.mean([m.missing_ratio for m in masks])),
               "files": [str(path)]}
    if cfg["check_rigid"]:
        summary["rigid_fraction"] = float(np.mean(
            [is_rigid(m).rigid for m in masks]))
    _write_sidecar(out, "mask", cfg)
    return summary


# ---------------------------------------------------------------------------
# complete

def _complete_one(mm, method: str, cfg: dict, model, db, refs, index: int):
    if method == "fista":
        return fista_complete(mm, beta=cfg["beta"], tol=cfg["tol"],
                              max_iter=cfg["max_iter"],
                              continuation_stages=cfg["stages"]).matrix
    if method == "opt":
        return opt_complete(mm, dim=cfg["dim"], steps=cfg["steps"],
                            lr=cfg["lr"],
                            seed=_instance_seed(cfg["seed"], 7, index)).matrix
    if method == "nn":
        return nn_complete(mm).matrix
    if method == "db":
        return db_search_complete(mm, db).matrix
    if method == "mean":
        return ensemble_mean_complete(refs, index).matrix
    dm, _ = fish_mod._diffusion_complete(
        mm, method, model, seed=_instance_seed(cfg["seed"], 11, index),
        substeps=cfg["substeps"], resamples=cfg["resamples"], eta=cfg["eta"],
        sigma_y=cfg["sigma_y"], travel_length=cfg["travel_length"],
        travel_repeat=cfg["travel_repeat"])
    return dm


def _prepare_method(method: str, cfg: dict, n: int):
    """Load the method's external inputs (model or database) once."""
    model = db = None
    if method in DIFFUSION_METHODS:
        if not cfg.get("model"):
            raise ValueError(f"method {method!r} requires --model weights")
        model = load_predictor(cfg["model"])
    if method == "db":
        if not cfg.get("db"):
            raise ValueError("method 'db' requires --db reference data")
        batch = load_edm_batch(cfg["db"])
        if batch.n != n:
            raise ValueError(f"database n={batch.n} does not match data n={n}")
        db = batch.values
    return model, db


def cmd_complete(cfg: dict) -> dict:
    out = _out_dir(cfg)
    data = load_edm_batch(cfg["data"])
    masks = _load_masks(cfg["masks"], data.n, data.count)
    method = cfg["method"]
    if method not in COMPLETE_METHODS:
        raise ValueError(f"method must be one of {COMPLETE_METHODS}")
    model, db = _prepare_method(method, cfg, data.n)
    truth = [DistanceMatrix(values=v, squared=data.squared)
             for v in data.values]
    corrupted = [apply_mask(t, m) for t, m in zip(truth, masks)]

    def run(i):
        done = _complete_one(corrupted[i], method, cfg, model, db,
                             corrupted, i)
        hidden = (masks[i].bits == 0) & ~np.eye(data.n, dtype=bool)
        rmse = (metrics_mod.rmse_masked(done, truth[i], masks[i])
                if hidden.any() else float("nan"))
        return done, rmse

    jobs = cfg["jobs"]
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, range(data.count)))
    else:
        results = [run(i) for i in range(data.count)]
    completed = np.stack([dm.values for dm, _ in results])
    rmses = np.array([r for _, r in results])
    path = out / "completed.edmd"
    save_edm_batch(path, completed, hurst=data.hurst, squared=data.squared)
    _write_csv(out / "per_instance.csv", ("index", "rmse"),
               [(i, f"{r:.10g}") for i, r in enumerate(rmses)])
    _write_sidecar(out, "complete", cfg)
    scored = rmses[np.isfinite(rmses)]
    return {"command": "complete", "method": method, "count": data.count,
            "rmse_mean": float(scored.mean()) if scored.size else None,
            "rmse_err": (float(scored.std(ddof=1) / np.sqrt(scored.size))
                         if scored.size > 1 else 0.0),
            "files": [str(path)]}


# ---------------------------------------------------------------------------
# sample

def cmd_sample(cfg: dict) -> dict:
    out = _out_dir(cfg)
    if not cfg.get("model"):
        raise ValueError("--model weights are required")
    model = load_predictor(cfg["model"])
    schedule = model.schedule
    if cfg["substeps"] is not None:
        schedule = schedule.subsample(
            uniform_indices(len(schedule), cfg["substeps"]))
    raw = ddpm_sample(model, schedule, count=cfg["count"], seed=cfg["seed"])
    mats, asym, clipped = [], [], []
    for x in raw:
        dm, rep = postprocess_edm(x, model.normalization)
        mats.append(dm.values)
        asym.append(rep["max_asymmetry"])
        clipped.append(rep["max_clipped"])
    path = out / "samples.edmd"
    save_edm_batch(path, np.stack(mats),
                   hurst=model.normalization.hurst, squared=True)
    _write_sidecar(out, "sample", cfg)
    return {"command": "sample", "count": cfg["count"], "n": model.n,
            "max_asymmetry": float(np.max(asym)),
            "max_clipped": float(np.max(clipped)), "files": [str(path)]}


# ---------------------------------------------------------------------------
# metrics

def _metric_rmse(cfg, out):
    a = load_edm_batch(cfg["a"])
    b = load_edm_batch(cfg["b"])
    if a.values.shape != b.values.shape:
        raise ValueError("datasets must have matching shape")
    masks = _load_masks(cfg["masks"], a.n, a.count)
    vals = [metrics_mod.rmse_masked(
        DistanceMatrix(values=x, squared=a.squared),
        DistanceMatrix(values=y, squared=b.squared), m)
        for x, y, m in zip(a.values, b.values, masks)]
    vals = np.array(vals)
    _write_csv(out / "rmse.csv", ("index", "rmse"),
               [(i, f"{v:.10g}") for i, v in enumerate(vals)])
    return {"value": float(vals.mean()),
            "err": (float(vals.std(ddof=1) / np.sqrt(len(vals)))
                    if len(vals) > 1 else 0.0), "count": len(vals)}


def _fid_embedding(ref: np.ndarray, k: int):
    if k <= 0:
        return None
    k = min(k, ref.shape[0] - 1, ref.shape[1] * ref.shape[2])
    return metrics_mod.EnsembleEmbedding.fit_pca(list(ref), dim=k)


def _metric_fid(cfg, out):
    a = load_edm_batch(cfg["a"])
    b = load_edm_batch(cfg["b"])
    emb = _fid_embedding(a.values, cfg["pca"])
    e1 = list(a.values)
    e2 = list(b.values)
    if cfg["error_bars"]:
        value, err = metrics_mod.frechet_distance(e1, e2, emb=emb,
                                                  error_bars=True)
    else:
        value, err = metrics_mod.frechet_distance(e1, e2, emb=emb), None
    return {"value": float(value), "err": None if err is None else float(err),
            "count_a": a.count, "count_b": b.count,
            "embedding_dim": None if emb is None else emb.dim}


def _metric_scaling(cfg, out):
    data = load_edm_batch(cfg["data"])
    ensemble = [DistanceMatrix(values=v, squared=data.squared)
                for v in data.values]
    fit_range = tuple(_parse_ints(cfg["fit_range"])) if cfg["fit_range"] else None
    slope, curve = metrics_mod.scaling_exponent(ensemble, fit_range=fit_range)
    _write_csv(out / "scaling_curve.csv", ("s", "x"),
               [(s, f"{x:.10g}") for s, x in curve])
    return {"value": float(slope), "points": len(curve)}


def _metric_collapse(cfg, out):
    data = load_edm_batch(cfg["data"])
    ensemble = [DistanceMatrix(values=v, squared=data.squared)
                for v in data.values]
    reports = metrics_mod.gaussian_collapse(ensemble, _parse_ints(cfg["s"]),
                                            dim=cfg["dim"], alpha=cfg["alpha"])
    rows = [(r.s, f"{r.ks:.10g}", f"{r.threshold:.10g}", r.n_pooled,
             int(r.passed)) for r in reports]
    _write_csv(out / "collapse.csv",
               ("s", "ks", "threshold", "n_pooled", "passed"), rows)
    return {"passed": bool(all(r.passed for r in reports)),
            "ks": {str(r.s): float(r.ks) for r in reports},
            "alpha": cfg["alpha"]}


def _metric_rank(cfg, out):
    data = load_edm_batch(cfg["data"])
    vals = np.array([rank_fraction(DistanceMatrix(values=v, squared=data.squared),
                                   r=cfg["r"], norm=cfg["norm"])
                     for v in data.values])
    _write_csv(out / "rank.csv", ("index", "rank_fraction"),
               [(i, f"{v:.10g}") for i, v in enumerate(vals)])
    return {"value": float(vals.mean()), "min": float(vals.min()),
            "r": cfg["r"], "count": len(vals)}


def _metric_fidfit(cfg, out):
    if not cfg.get("points"):
        raise ValueError("--points CSV (columns mu,m,fid) is required")
    points = []
    with open(cfg["points"], newline="") as fh:
        for row in csv.DictReader(fh):
            points.append((float(row["m"]), float(row["mu"]),
                           float(row["fid"])))
    reference = None
    if cfg["ref_mu"] is not None and cfg["ref_fid"] is not None:
        reference = (cfg["ref_mu"], cfg["ref_fid"])
    fit = metrics_mod.fid_scaling_fit(points, reference=reference)
    result = {"a": fit.a, "gamma": fit.gamma,
              "log10_m_star": (None if np.isnan(fit.log10_m_star)
                               else fit.log10_m_star),
              "points": len(points)}
    if cfg["n"] is not None:
        result["log10_m_star_theoretical"] = metrics_mod.theoretical_m_star(cfg["n"])
    return result


_METRIC_HANDLERS = {"rmse": _metric_rmse, "fid": _metric_fid,
                    "scaling": _metric_scaling, "collapse": _metric_collapse,
                    "rank": _metric_rank, "fidfit": _metric_fidfit}


def cmd_metrics(cfg: dict) -> dict:
    out = _out_dir(cfg)
    metric = cfg["metric"]
    if metric not in METRIC_CHOICES:
        raise ValueError(f"metric must be one of {METRIC_CHOICES}")
    result = _METRIC_HANDLERS[metric](cfg, out)
    _write_sidecar(out, "metrics", cfg)
    summary = {"command": "metrics", "metric": metric}
    summary.update(result)
    atomic_write_text(out / "metrics.json",
                      json.dumps(_jsonable(summary), indent=2) + "\n")
    return summary


# ---------------------------------------------------------------------------
# fish

def cmd_fish(cfg: dict) -> dict:
    out = _out_dir(cfg)
    with open(cfg["input"]) as fh:
        cells = fish_mod.parse_fish_table(fh)
    if cfg["select_missing"] is not None:
        cells = fish_mod.select_cells(cells, cfg["select_missing"])
    if not cells:
        raise ValueError("no cells to process after selection")
    if cfg["task"] == "scaling":
        slope, curve = fish_mod.fish_scaling(cells)
        _write_csv(out / "fish_scaling.csv", ("s", "x_nm"),
                   [(s, f"{x:.10g}") for s, x in curve])
        _write_sidecar(out, "fish", cfg)
        return {"command": "fish", "task": "scaling", "slope": float(slope),
                "cells": len(cells)}
    model = None
    if cfg["method"] in fish_mod._DIFFUSION:
        if not cfg.get("model"):
            raise ValueError(f"method {cfg['method']!r} requires --model weights")
        model = load_predictor(cfg["model"])
    indices = _parse_ints(cfg["drop_indices"]) if cfg["drop_indices"] else None
    report = fish_mod.impute_cells(
        cells, cfg["method"], model=model, drop_k=cfg["drop"],
        drop_indices=indices, seed=cfg["seed"], substeps=cfg["substeps"],
        resamples=cfg["resamples"], eta=cfg["eta"], sigma_y=cfg["sigma_y"],
        travel_length=cfg["travel_length"], travel_repeat=cfg["travel_repeat"],
        jobs=cfg["jobs"])
    # completed matrices as raw nm distances
    stack = np.stack([np.sqrt(r["completed"].values)
                      for r in report["per_cell"]])
    path = out / "completed.edmd"
    save_edm_batch(path, stack, hurst=None, squared=False)
    rows = [(r["cell"], f"{r['rmse_nm']:.6g}", f"{r['rank_fraction']:.6g}",
             r["eval_entries"], int(r["structural_ok"]))
            for r in report["per_cell"]]
    _write_csv(out / "per_cell.csv",
               ("cell", "rmse_nm", "rank_fraction", "eval_entries",
                "structural_ok"), rows)
    _write_sidecar(out, "fish", cfg)
    return {"command": "fish", "task": "impute", "method": report["method"],
            "rmse_mean": report["rmse_mean"], "rmse_err": report["rmse_err"],
            "rank_mean": report["rank_mean"], "cells": report["cells"],
            "files": [str(path)]}


# ---------------------------------------------------------------------------
# sweep

def _sweep_cell(mu: float, method: str, cfg: dict, truth, model, db):
    """One (mu, method) grid cell: mask, complete, score all instances."""
    n = truth[0].n
    count = len(truth)
    masks, corrupted = [], []
    for j in range(count):
        m = random_mask(n, mu, seed=_instance_seed(cfg["seed"], round(mu * 1e6), j))
        masks.append(m)
        corrupted.append(apply_mask(truth[j], m))
    rigid = float(np.mean([is_rigid(m).rigid for m in masks]))

    def run(j):
        return _complete_one(corrupted[j], method, cfg, model, db,
                             corrupted, j)

    jobs = cfg["jobs"]
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(run, range(count)))
    else:
        done = [run(j) for j in range(count)]
    rmses = []
    for j in range(count):
        hidden = (masks[j].bits == 0) & ~np.eye(n, dtype=bool)
        if hidden.any():
            rmses.append(metrics_mod.rmse_masked(done[j], truth[j], masks[j]))
    rmses = np.array(rmses) if rmses else np.array([0.0])
    emb = _fid_embedding(np.stack([t.values for t in truth]), cfg["pca"])
    try:
        fid, fid_err = metrics_mod.frechet_distance(
            [t.values for t in truth], [d.values for d in done],
            emb=emb, error_bars=True)
    except (ValueError, metrics_mod.FrechetError):
        fid, fid_err = float("nan"), float("nan")
    rank = float(np.mean([rank_fraction(d, r=cfg["rank"]) for d in done]))
    return {"mu": mu, "method": method,
            "rmse": float(rmses.mean()),
            "rmse_err": (float(rmses.std(ddof=1) / np.sqrt(rmses.size))
                         if rmses.size > 1 else 0.0),
            "fid": float(fid), "fid_err": float(fid_err),
            "rank": rank, "rigid_fraction": rigid, "seed": cfg["seed"]}


def _load_sweep_rows(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _save_sweep_rows(path: Path, rows: list[dict]) -> None:
    rows = sorted(rows, key=lambda r: (float(r["mu"]), r["method"]))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(SWEEP_COLUMNS))
    w.writeheader()
    w.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def cmd_sweep(cfg: dict) -> dict:
    out = _out_dir(cfg)
    data = load_edm_batch(cfg["data"])
    count = min(cfg["count"], data.count) if cfg["count"] else data.count
    truth = [DistanceMatrix(values=v, squared=data.squared)
             for v in data.values[:count]]
    methods = [m.strip() for m in cfg["methods"].split(",") if m.strip()]
    for m in methods:
        if m not in COMPLETE_METHODS:
            raise ValueError(f"unknown method {m!r}")
    if cfg["mu"]:
        mus = _parse_floats(cfg["mu"])
    else:
        mus = list(np.linspace(0.01, 0.99, cfg["mu_count"]))
    csv_path = out / "sweep.csv"
    rows = _load_sweep_rows(csv_path)
    have = {(f"{float(r['mu']):.6g}", r["method"]) for r in rows}
    loaded = {}
    for m in methods:
        if (m in DIFFUSION_METHODS or m == "db") and m not in loaded:
            loaded[m] = _prepare_method(m, cfg, data.n)
    done, skipped, failed = 0, 0, []
    for mu in mus:
        for method in methods:
            key = (f"{float(mu):.6g}", method)
            if key in have:
                skipped += 1
                continue
            model, db = loaded.get(method, (None, None))
            try:
                row = _sweep_cell(float(mu), method, cfg, truth, model, db)
            except Exception as e:   # record and continue the grid
                failed.append({"mu": float(mu), "method": method,
                               "error": str(e)})
                continue
            rows.append({k: row[k] for k in SWEEP_COLUMNS})
            have.add(key)
            done += 1
            _save_sweep_rows(csv_path, rows)
    _write_sidecar(out, "sweep", cfg)
    summary = {"command": "sweep", "cells_done": done,
               "cells_skipped": skipped, "instances": count,
               "csv": str(csv_path)}
    if failed:
        summary["failed"] = failed
    return summary


# ---------------------------------------------------------------------------
# argument plumbing

def _add_common(p, *names):
    if "out" in names:
        p.add_argument("--out", help="output directory for artifacts")
    if "seed" in names:
        p.add_argument("--seed", type=int, help="base RNG seed")
    if "jobs" in names:
        p.add_argument("--jobs", type=int, help="max parallel workers")
    if "config" in names:
        p.add_argument("--config", help="JSON config file; flags override")


def _sampler_flags(p):
    p.add_argument("--substeps", type=int,
                   help="subsample the chain to this many steps")
    p.add_argument("--resamples", type=int, help="repaint passes per level")
    p.add_argument("--eta", type=float, help="ddrm mixing weight")
    p.add_argument("--sigma-y", dest="sigma_y", type=float,
                   help="ddrm observation noise")
    p.add_argument("--travel-length", dest="travel_length", type=int,
                   help="ddnm time-travel block length")
    p.add_argument("--travel-repeat", dest="travel_repeat", type=int,
                   help="ddnm passes per block")


DEFAULTS = {
    "generate": {"hurst": 0.5, "n": 64, "count": 100, "seed": 0, "dim": 3,
                 "step_scale": 1.0, "traj": False, "out": None},
    "mask": {"n": 64, "mu": 0.5, "count": 1, "seed": 0, "rows": None,
             "check_rigid": False, "out": None},
    "complete": {"data": None, "masks": None, "method": None, "model": None,
                 "db": None, "seed": 0, "jobs": None, "out": None,
                 "beta": None, "tol": 1e-7, "max_iter": 5000, "stages": 0,
                 "dim": 3, "steps": 5000, "lr": 0.05, "substeps": None,
                 "resamples": 10, "eta": 0.85, "sigma_y": 0.0,
                 "travel_length": 3, "travel_repeat": 3, "rank": 5},
    "sample": {"model": None, "count": 10, "seed": 0, "substeps": None,
               "out": None},
    "metrics": {"metric": None, "a": None, "b": None, "masks": None,
                "data": None, "points": None, "s": "4,16,48", "dim": 3,
                "alpha": 0.01, "r": 5, "norm": "spectral-l2", "pca": 64,
                "error_bars": False, "fit_range": None, "ref_mu": None,
                "ref_fid": None, "n": None, "out": None},
    "fish": {"input": None, "task": "impute", "method": "ddrm",
             "select_missing": None, "drop": 10, "drop_indices": None,
             "model": None, "seed": 0, "jobs": None, "substeps": None,
             "resamples": 10, "eta": 0.85, "sigma_y": 0.0,
             "travel_length": 3, "travel_repeat": 3, "out": None},
    "sweep": {"data": None, "methods": "fista,nn", "mu": None, "mu_count": 5,
              "count": 16, "model": None, "db": None, "seed": 0, "jobs": None,
              "pca": 16, "rank": 5, "out": None,
              "beta": None, "tol": 1e-7, "max_iter": 5000, "stages": 0,
              "dim": 3, "steps": 5000, "lr": 0.05, "substeps": None,
              "resamples": 10, "eta": 0.85, "sigma_y": 0.0,
              "travel_length": 3, "travel_repeat": 3},
}

HANDLERS = {"generate": cmd_generate, "mask": cmd_mask,
            "complete": cmd_complete, "sample": cmd_sample,
            "metrics": cmd_metrics, "fish": cmd_fish, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edmkit",
        description="Distance-matrix workbench: synthesis, corruption, "
                    "completion, diffusion inpainting, metrics, and "
                    "chromatin imputation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize fBm trajectory/EDM datasets")
    p.add_argument("--hurst", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--count", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--step-scale", dest="step_scale", type=float)
    p.add_argument("--traj", action="store_const", const=True,
                   help="also write the trajectories")
    _add_common(p, "out", "seed", "config")

    p = sub.add_parser("mask", help="generate corruption masks")
    p.add_argument("--n", type=int)
    p.add_argument("--mu", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--rows", help="comma list of 0-based rows to hide "
                                  "(row/col mask instead of Bernoulli)")
    p.add_argument("--check-rigid", dest="check_rigid", action="store_const",
                   const=True, help="report the rigid fraction of the masks")
    _add_common(p, "out", "seed", "config")

    p = sub.add_parser("complete", help="complete masked matrices")
    p.add_argument("--data", help="EDMD file with ground-truth matrices")
    p.add_argument("--masks", help="MASK file (one mask or one per matrix)")
    p.add_argument("--method", choices=COMPLETE_METHODS)
    p.add_argument("--model", help="EPSW weights for diffusion methods")
    p.add_argument("--db", help="EDMD database for the db method")
    p.add_argument("--beta", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--stages", type=int, help="fista continuation stages")
    p.add_argument("--dim", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    _sampler_flags(p)
    _add_common(p, "out", "seed", "jobs", "config")

    p = sub.add_parser("sample", help="unconditional diffusion sampling")
    p.add_argument("--model")
    p.add_argument("--count", type=int)
    p.add_argument("--substeps", type=int)
    _add_common(p, "out", "seed", "config")

    p = sub.add_parser("metrics", help="score datasets")
    p.add_argument("--metric", choices=METRIC_CHOICES)
    p.add_argument("--a", help="first dataset (rmse, fid)")
    p.add_argument("--b", help="second dataset (rmse, fid)")
    p.add_argument("--masks", help="MASK file (rmse)")
    p.add_argument("--data", help="dataset (scaling, collapse, rank)")
    p.add_argument("--points", help="CSV mu,m,fid (fidfit)")
    p.add_argument("--s", help="comma list of separations (collapse)")
    p.add_argument("--dim", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--r", type=int, help="target rank (rank)")
    p.add_argument("--norm", choices=("spectral-l2", "nuclear"))
    p.add_argument("--pca", type=int, help="embedding dim for fid; 0 = none")
    p.add_argument("--error-bars", dest="error_bars", action="store_const",
                   const=True)
    p.add_argument("--fit-range", dest="fit_range",
                   help="comma pair lo,hi (scaling)")
    p.add_argument("--ref-mu", dest="ref_mu", type=float)
    p.add_argument("--ref-fid", dest="ref_fid", type=float)
    p.add_argument("--n", type=int, help="matrix size for the theoretical "
                                         "database-size estimate (fidfit)")
    _add_common(p, "out", "config")

    p = sub.add_parser("fish", help="chromatin table imputation benchmark")
    p.add_argument("--input", help="probe coordinate table (csv/tsv)")
    p.add_argument("--task", choices=("impute", "scaling"))
    p.add_argument("--method", choices=fish_mod.IMPUTE_METHODS)
    p.add_argument("--select-missing", dest="select_missing", type=int,
                   help="keep only cells with exactly this many absent probes")
    p.add_argument("--drop", type=int, help="extra rows to hide per cell")
    p.add_argument("--drop-indices", dest="drop_indices",
                   help="explicit 1-based probe indices to hide")
    p.add_argument("--model", help="EPSW weights for diffusion methods")
    _sampler_flags(p)
    _add_common(p, "out", "seed", "jobs", "config")

    p = sub.add_parser("sweep", help="missing-ratio benchmark grid")
    p.add_argument("--data", help="EDMD file with ground-truth matrices")
    p.add_argument("--methods", help="comma list of completion methods")
    p.add_argument("--mu", help="comma list of missing ratios")
    p.add_argument("--mu-count", dest="mu_count", type=int,
                   help="equally spaced missing ratios in [0.01, 0.99]")
    p.add_argument("--count", type=int, help="instances per grid cell")
    p.add_argument("--model", help="EPSW weights for diffusion methods")
    p.add_argument("--db", help="EDMD database for the db method")
    p.add_argument("--pca", type=int)
    p.add_argument("--rank", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--stages", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    _sampler_flags(p)
    _add_common(p, "out", "seed", "jobs", "config")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then config-file values, then explicit flags."""
    cfg = dict(DEFAULTS[args.command])
    path = getattr(args, "config", None)
    if path:
        with open(path) as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValueError("config file must hold a JSON object")
        unknown = sorted(set(doc) - set(cfg) - {"command"})
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        cfg.update({k: v for k, v in doc.items() if k != "command"})
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        summary = HANDLERS[args.command](cfg)
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(json.dumps(_jsonable(summary), sort_keys=True))
    return 1 if summary.get("failed") else 0


if __name__ == "__main__":
    sys.exit(main())
