"""Chromatin tracing tables: ingestion, per-cell distance matrices, and the
row-drop imputation benchmark.

A tracing table lists one probe per row with columns

    Segment Index, Chromosome Index, n, Z, X, Y

(comma- or tab-separated, optional header). Coordinates are in nm; a literal
"nan" triple marks a probe that was not localized in that cell. Rows group by
chromosome index into cells; probe indices n run contiguously from 1, so every
cell's matrix has one row per probe slot and absent probes become fully masked
rows. Distances are stored squared (nm^2) with the usual known-entry mask;
reported RMSEs are raw nm.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .complete import ensemble_mean_complete, nn_complete
from .diffusion import samplers
from .diffusion.schedules import uniform_indices
from .diffusion.weights import postprocess_edm
from .edm import DistanceMatrix, Mask, MaskedMatrix, rank_fraction, validate_edm
from .metrics import rmse_masked

__all__ = ["FishProbe", "FishCell", "parse_fish_table", "cell_to_masked_edm",
           "select_cells", "drop_additional", "impute_cells", "fish_scaling",
           "IMPUTE_METHODS"]

IMPUTE_METHODS = ("nn", "ensemble-mean", "ddpm", "repaint", "ddrm", "ddnm")
_DIFFUSION = ("ddpm", "repaint", "ddrm", "ddnm")


@dataclass
class FishProbe:
    index: int                   # 1-based slot along the chromosome
    position: np.ndarray         # (z, x, y) in nm; NaNs when absent
    present: bool


@dataclass
class FishCell:
    chromosome_index: int
    probes: list[FishProbe] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.probes)

    @property
    def present_flags(self) -> np.ndarray:
        return np.array([p.present for p in self.probes], dtype=bool)

    @property
    def absent_count(self) -> int:
        return int((~self.present_flags).sum())

    @property
    def positions(self) -> np.ndarray:
        """(n, 3) coordinates in nm, NaN rows for absent probes."""
        return np.stack([p.position for p in self.probes])


def _detect_delimiter(line: str) -> str:
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    raise ValueError("could not detect delimiter: expected comma- or "
                     "tab-separated columns")


def parse_fish_table(source) -> list[FishCell]:
    """Parse a tracing table (text or file-like) into cells.

    Rows group by chromosome index and sort by probe index n; a header row is
    skipped when its fields are not numeric. Malformed rows raise with their
    1-based line number; so do gaps or duplicates in a cell's probe indices.
    """
    text = source if isinstance(source, str) else source.read()
    rows = []
    delim = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if delim is None:
            delim = _detect_delimiter(line)
        fields = [f.strip() for f in line.split(delim)]
        if len(fields) != 6:
            if not rows and _is_header(fields):
                continue
            raise ValueError(f"line {lineno}: expected 6 fields "
                             f"(Segment Index, Chromosome Index, n, Z, X, Y), "
                             f"got {len(fields)}")
        try:
            row = _parse_row(fields)
        except ValueError as e:
            if not rows and _is_header(fields):
                continue
            raise ValueError(f"line {lineno}: {e}") from None
        rows.append(row)
    cells = {}
    for chrom, n_idx, pos, present in rows:
        cells.setdefault(chrom, []).append((n_idx, pos, present))
    out = []
    for chrom in sorted(cells):
        probes = sorted(cells[chrom], key=lambda r: r[0])
        indices = [p[0] for p in probes]
        if indices != list(range(1, len(probes) + 1)):
            raise ValueError(f"chromosome {chrom}: probe indices must run "
                             f"1..{len(probes)} without gaps or repeats, "
                             f"got {indices[:8]}...")
        out.append(FishCell(chromosome_index=chrom,
                            probes=[FishProbe(index=i, position=p, present=pr)
                                    for i, p, pr in probes]))
    return out


def _is_header(fields) -> bool:
    for f in fields:
        try:
            float(f)
        except ValueError:
            return True
    return False


def _parse_row(fields):
    _ = float(fields[0])                       # segment index, numeric only
    chrom = int(float(fields[1]))
    n_idx = int(float(fields[2]))
    coords = [float(f) for f in fields[3:6]]
    nans = [math.isnan(c) for c in coords]
    if any(nans) and not all(nans):
        raise ValueError("coordinates must be all numeric or all 'nan'")
    present = not nans[0]
    pos = np.array(coords, dtype=np.float64)
    return chrom, n_idx, pos, present


def cell_to_masked_edm(cell: FishCell) -> MaskedMatrix:
    """Squared-distance matrix (nm^2) over all probe slots; rows and columns
    of absent probes are masked, as is the diagonal."""
    present = cell.present_flags
    if present.sum() < 2:
        raise ValueError(f"chromosome {cell.chromosome_index}: need at least "
                         f"2 present probes, got {int(present.sum())}")
    pos = cell.positions
    diff = pos[:, None, :] - pos[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    bits = np.outer(present, present).astype(np.uint8)
    np.fill_diagonal(bits, 0)
    d2 = np.where(bits.astype(bool), d2, 0.0)
    return MaskedMatrix(matrix=DistanceMatrix(values=d2, squared=True),
                        mask=Mask(bits=bits))


def select_cells(cells, missing_rows: int) -> list[FishCell]:
    """Cells whose absent-probe count equals missing_rows exactly."""
    return [c for c in cells if c.absent_count == missing_rows]


def drop_additional(mm: MaskedMatrix, k: int, seed: int = 0,
                    indices=None):
    """Hide k further present rows/columns, uniformly at random.

    Returns (corrupted, eval_mask) where eval_mask marks exactly the entries
    that were known before and are hidden now. `indices` (1-based probe
    numbers) overrides the sampling for a reproducible fixture; every listed
    probe must currently be present.
    """
    bits = mm.bits.astype(bool)
    present_rows = np.flatnonzero(bits.any(axis=1))
    if indices is not None:
        rows = np.asarray(sorted(set(int(i) for i in indices)), dtype=int) - 1
        if rows.size and (rows.min() < 0 or rows.max() >= mm.n):
            raise ValueError(f"probe indices must lie in 1..{mm.n}")
        not_present = sorted(set(rows) - set(present_rows))
        if not_present:
            raise ValueError(f"probes already absent: "
                             f"{[r + 1 for r in not_present]}")
        k = rows.size
    else:
        if k < 0:
            raise ValueError(f"k must be >= 0, got {k}")
        rows = None
    if k > present_rows.size - 2:
        raise ValueError(f"cannot drop {k} of {present_rows.size} present rows "
                         f"(at least 2 must remain)")
    if rows is None:
        rng = np.random.default_rng(seed)
        rows = (np.sort(rng.choice(present_rows, size=k, replace=False))
                if k else np.array([], dtype=int))
    new_bits = bits.copy()
    new_bits[rows, :] = False
    new_bits[:, rows] = False
    eval_bits = bits & ~new_bits
    corrupted = MaskedMatrix(
        matrix=DistanceMatrix(values=np.where(new_bits, mm.values, 0.0),
                              squared=mm.matrix.squared),
        mask=Mask(bits=new_bits.astype(np.uint8)))
    return corrupted, Mask(bits=eval_bits.astype(np.uint8))


def _as_masked(cell):
    return cell if isinstance(cell, MaskedMatrix) else cell_to_masked_edm(cell)


def _cell_label(cell, i):
    return cell.chromosome_index if isinstance(cell, FishCell) else i


def _fit_window(vals, bits, n_model):
    """Center-crop or center-pad a matrix/mask pair to n_model. Returns the
    windowed pair plus the slice mapping window coordinates back."""
    n = vals.shape[0]
    if n == n_model:
        return vals, bits, slice(0, n), slice(0, n_model)
    if n > n_model:
        start = (n - n_model) // 2
        sl = slice(start, start + n_model)
        return vals[sl, sl], bits[sl, sl], sl, slice(0, n_model)
    start = (n_model - n) // 2
    wv = np.zeros((n_model, n_model))
    wb = np.zeros((n_model, n_model), dtype=bits.dtype)
    sl = slice(start, start + n)
    wv[sl, sl] = vals
    wb[sl, sl] = bits
    return wv, wb, slice(0, n), sl


def _diffusion_complete(mm: MaskedMatrix, method: str, model, seed: int,
                        substeps=None, resamples: int = 10, eta: float = 0.85,
                        sigma_y: float = 0.0, travel_length: int = 3,
                        travel_repeat: int = 3):
    """Inpaint one cell with a diffusion sampler, in the model's normalized
    space, handling any cell-size vs model-size mismatch by center crop/pad
    with fully masked padding."""
    norm = model.normalization
    wv, wb, cell_sl, win_sl = _fit_window(mm.values, mm.bits, model.n)
    y = norm.normalize(wv)
    schedule = model.schedule
    if substeps is not None:
        schedule = schedule.subsample(uniform_indices(len(schedule), substeps))
    args = (model, schedule, y, wb.astype(np.uint8))
    if method == "ddpm":
        x = samplers.ddpm_inpaint(*args, seed=seed)
    elif method == "repaint":
        x = samplers.repaint_inpaint(*args, resamples=resamples, seed=seed)
    elif method == "ddrm":
        x = samplers.ddrm_inpaint(*args, eta=eta, sigma_y=sigma_y, seed=seed)
    elif method == "ddnm":
        x = samplers.ddnm_inpaint(*args, travel_length=travel_length,
                                  repeats=travel_repeat, seed=seed)
    else:
        raise ValueError(f"unknown diffusion method {method!r}")
    dm_win, pp = postprocess_edm(x[0], norm)
    out = mm.values.copy()
    out[cell_sl, cell_sl] = dm_win.values[win_sl, win_sl]
    known = mm.bits.astype(bool)
    covered = np.zeros_like(known)
    covered[cell_sl, cell_sl] = True
    outside = (~known) & (~covered) & ~np.eye(mm.n, dtype=bool)
    n_outside = int(outside.sum())
    if n_outside:
        seen = (known | covered) & ~np.eye(mm.n, dtype=bool)
        interim = MaskedMatrix(matrix=DistanceMatrix(values=np.where(seen, out, 0.0),
                                                     squared=True),
                               mask=Mask(bits=seen.astype(np.uint8)))
        out = np.where(outside, nn_complete(interim).matrix.values, out)
    out = np.where(known, mm.values, out)
    out = (out + out.T) / 2.0
    np.fill_diagonal(out, 0.0)
    report = dict(pp)
    report["outside_entries"] = n_outside
    return DistanceMatrix(values=out, squared=True), report


def _impute_one(i, originals, corrupted, eval_masks, method, model, cfg):
    mm = corrupted[i]
    extras = {}
    if method == "nn":
        completed = nn_complete(mm).matrix
    elif method == "ensemble-mean":
        refs = [mm if j == i else originals[j] for j in range(len(originals))]
        res = ensemble_mean_complete(refs, i)
        completed, extras = res.matrix, dict(res.extras)
    else:
        completed, extras = _diffusion_complete(
            mm, method, model, seed=cfg["seed"] + i, substeps=cfg["substeps"],
            resamples=cfg["resamples"], eta=cfg["eta"], sigma_y=cfg["sigma_y"],
            travel_length=cfg["travel_length"],
            travel_repeat=cfg["travel_repeat"])
    truth = originals[i].matrix
    ev = eval_masks[i].bits.astype(bool)
    if ev.any():
        hide = Mask(bits=((~ev) & ~np.eye(mm.n, dtype=bool)).astype(np.uint8))
        rmse = rmse_masked(completed, truth, hide)
    else:
        rmse = float("nan")
    v = validate_edm(completed, tol=1e-6)
    report = {
        "cell": None,   # filled by caller
        "rmse_nm": rmse,
        "rank_fraction": rank_fraction(completed, r=cfg["rank"]),
        "eval_entries": int(ev.sum()),
        "structural_ok": bool(v.max_asymmetry <= 1e-6 and v.max_diagonal <= 1e-6
                              and v.min_entry >= -1e-6),
        "worst_triangle_violation": v.worst_triangle_violation,
        "completed": completed,
        "eval_mask": eval_masks[i],
    }
    report.update(extras)
    return report


def impute_cells(cells, method: str, model=None, *, drop_k: int = 10,
                 drop_indices=None, seed: int = 0, substeps=None,
                 resamples: int = 10, eta: float = 0.85, sigma_y: float = 0.0,
                 travel_length: int = 3, travel_repeat: int = 3,
                 rank: int = 5, jobs: int | None = None) -> dict:
    """Run the row-drop imputation benchmark over cells.

    Each cell is corrupted independently (drop_k further rows, or the given
    1-based drop_indices for every cell), imputed with `method`, and scored
    by RMSE in nm over exactly the newly hidden entries. Ensemble-mean
    references keep their own genuinely measured entries; only the cell
    being scored is corrupted. Diffusion methods need `model`, a loaded
    predictor carrying its normalization and schedule.
    """
    if method not in IMPUTE_METHODS:
        raise ValueError(f"method must be one of {IMPUTE_METHODS}, got {method!r}")
    if method in _DIFFUSION and model is None:
        raise ValueError(f"method {method!r} requires a loaded predictor model")
    if not cells:
        raise ValueError("need at least one cell")
    originals = [_as_masked(c) for c in cells]
    corrupted, eval_masks = [], []
    for i, mm in enumerate(originals):
        c, ev = drop_additional(mm, drop_k, seed=seed + i, indices=drop_indices)
        corrupted.append(c)
        eval_masks.append(ev)
    cfg = {"seed": seed, "substeps": substeps, "resamples": resamples,
           "eta": eta, "sigma_y": sigma_y, "travel_length": travel_length,
           "travel_repeat": travel_repeat, "rank": rank}

    def run(i):
        rep = _impute_one(i, originals, corrupted, eval_masks, method, model, cfg)
        rep["cell"] = _cell_label(cells[i], i)
        return rep

    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_cell = list(pool.map(run, range(len(cells))))
    else:
        per_cell = [run(i) for i in range(len(cells))]
    rmses = np.array([r["rmse_nm"] for r in per_cell], dtype=float)
    scored = rmses[np.isfinite(rmses)]
    rmse_mean = float(scored.mean()) if scored.size else float("nan")
    rmse_err = (float(scored.std(ddof=1) / np.sqrt(scored.size))
                if scored.size > 1 else 0.0)
    return {
        "method": method,
        "rmse_mean": rmse_mean,
        "rmse_err": rmse_err,
        "rank_mean": float(np.mean([r["rank_fraction"] for r in per_cell])),
        "cells": len(per_cell),
        "per_cell": per_cell,
    }


def fish_scaling(cells, fit_range: tuple[int, int] | None = None):
    """Mean spatial distance x(s) between loci s slots apart, known entries
    only, averaged over cells. Returns (log-log slope, [(s, x(s)), ...])."""
    if not cells:
        raise ValueError("need at least one cell")
    mms = [_as_masked(c) for c in cells]
    n = mms[0].n
    if any(mm.n != n for mm in mms):
        raise ValueError("cells must share one probe-slot count")
    lo, hi = fit_range if fit_range is not None else (2, max(3, n // 4))
    if not 1 <= lo < hi <= n - 1:
        raise ValueError(f"fit range must satisfy 1 <= lo < hi <= {n - 1}, "
                         f"got ({lo}, {hi})")
    curve = []
    for s in range(1, n):
        pool = []
        for mm in mms:
            d = np.diagonal(mm.values, offset=s)
            b = np.diagonal(mm.bits, offset=s).astype(bool)
            pool.append(np.sqrt(d[b]))
        pool = np.concatenate(pool)
        if pool.size:
            curve.append((s, float(pool.mean())))
    window = [(s, x) for s, x in curve if lo <= s <= hi]
    if len(window) < 2:
        raise ValueError("not enough known separations inside the fit range")
    s_arr = np.array([s for s, _ in window], dtype=float)
    x_arr = np.array([x for _, x in window])
    slope = float(np.polyfit(np.log(s_arr), np.log(x_arr), 1)[0])
    return slope, curve
