"""Experiment drivers: convergence-rate, variable-selection and sparsity studies.

Every study returns an :class:`ExperimentReport`.  Reports are deterministic
functions of their configuration and seed; the only non-reproducible fields
are the ``wall_time`` entries, which :meth:`ExperimentReport.to_json` can
omit.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .density import hellinger_vs_oracle
from .estimator import (
    GreedyOptions,
    RateParameters,
    exhaustive_fit,
    greedy_fit,
    select_sieve_size,
    theoretical_rate,
)
from .haar import estimate_decay_exponent, haar_analyze, mixed_holder_constant
from .synth import (
    ProductEmbedding,
    grid_density,
    oracle,
    resolve,
    sample_density,
    spec_to_dict,
)

__all__ = [
    "ExperimentReport",
    "StudyError",
    "run_convergence_study",
    "run_variable_selection_study",
    "run_sparsity_diagnostic",
    "fit_loglog_slope",
    "DEFAULT_LEVELS",
]

log = logging.getLogger(__name__)

TIMING_FIELDS = ("wall_time",)
DEFAULT_LEVELS = {1: 12, 2: 10, 3: 6}
# largest grid (number of cells) a sparsity diagnostic will allocate
MAX_GRID_CELLS = 1 << 24


class StudyError(RuntimeError):
    """A run failed; ``records`` holds the runs that completed before it."""

    def __init__(self, message, records):
        super().__init__(message)
        self.records = records


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    version: str = __version__
    # plot-ready CSV tables, written alongside the records
    tables: dict = field(default_factory=dict, repr=False)

    def to_dict(self, include_timing: bool = True) -> dict:
        records = self.records
        if not include_timing:
            records = [{k: v for k, v in r.items() if k not in TIMING_FIELDS} for r in records]
        return {
            "kind": self.kind,
            "version": self.version,
            "config": self.config,
            "summary": self.summary,
            "records": records,
        }

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(_jsonable(self.to_dict(include_timing)), indent=2, sort_keys=True) + "\n"

    def to_csv(self, rows: Optional[list] = None) -> str:
        rows = self.records if rows is None else rows
        buf = io.StringIO()
        if rows:
            columns = list(rows[0].keys())
            writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _csv_value(row.get(k)) for k in columns})
        return buf.getvalue()

    def write(self, out_dir, fmt: str = "json", include_timing: bool = True) -> list:
        """Write ``<kind>.json`` and/or ``<kind>.csv`` into ``out_dir``; returns the paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        if fmt in ("json", "both"):
            path = out / f"{self.kind}.json"
            path.write_text(self.to_json(include_timing))
            paths.append(path)
        if fmt in ("csv", "both"):
            path = out / f"{self.kind}.csv"
            path.write_text(self.to_csv())
            paths.append(path)
            for name, rows in self.tables.items():
                path = out / f"{self.kind}_{name}.csv"
                path.write_text(self.to_csv(rows))
                paths.append(path)
        return paths


def _csv_value(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _spec_name(spec) -> str:
    return spec if isinstance(spec, str) else type(spec).__name__


def _run_seeds(seed: int, *key) -> tuple:
    state = np.random.SeedSequence([int(seed), *[int(k) for k in key]]).generate_state(2, dtype=np.uint64)
    return int(state[0]), int(state[1])


def fit_loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    slope, _ = np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# convergence


# Greedy lookahead used by the studies.  Plain one-step search stalls on
# densities whose peaks sit at cell midpoints (mix2d), because the first cut
# through such a cell gains nothing on average.
STUDY_LOOKAHEAD = 2


def _convergence_run(task):
    spec_desc, n, size, method, data_seed, mc_seed, n_mc, greedy_opts = task
    spec = resolve(spec_desc)
    start = time.perf_counter()
    data = sample_density(spec, n, data_seed)
    if method == "greedy":
        fit = greedy_fit(data, size, GreedyOptions(**greedy_opts))
    elif method == "exhaustive":
        fit = exhaustive_fit(data, size)
    else:
        raise ValueError(f"unknown method {method!r}")
    err, se = hellinger_vs_oracle(fit.density, oracle(spec), n_mc=n_mc, seed=mc_seed)
    return {
        "n": n,
        "I": size,
        "leaves": fit.density.size,
        "method": method,
        "seed": data_seed,
        "score": fit.score,
        "hellinger": err,
        "se": se,
        "wall_time": time.perf_counter() - start,
    }


def _map(fn, tasks, threads: int):
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            yield from pool.map(fn, tasks)
    else:
        for t in tasks:
            yield fn(t)


def run_convergence_study(
    spec,
    n_grid: Sequence[int],
    params: RateParameters = RateParameters(),
    replications: int = 5,
    seed: int = 0,
    method: str = "greedy",
    n_mc: int = 100_000,
    threads: int = 1,
    bootstrap: int = 1000,
    grid_depth: Optional[int] = None,
    min_leaf_count: int = 0,
    lookahead: int = STUDY_LOOKAHEAD,
) -> ExperimentReport:
    """Hellinger error of the sieve MLE against the true density as ``n`` grows.

    For each ``n`` the partition size comes from :func:`select_sieve_size`;
    each replication draws fresh data and fits it.  The summary holds the
    median error per ``n``, the least-squares slope of log median error on
    log ``n`` with a bootstrap 90% band (replications resampled within each
    ``n``), and the reference exponent ``-r/(2r+1)``.
    """
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 4 or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n grid must be strictly ascending with at least 4 points")
    if replications < 3:
        raise ValueError("need at least 3 replications")
    spec_obj = resolve(spec)
    spec_desc = spec if isinstance(spec, str) else spec_to_dict(spec_obj)
    greedy_opts = {"grid_depth": grid_depth, "min_leaf_count": min_leaf_count, "lookahead": lookahead}
    config = {
        "spec": spec_desc,
        "n_grid": n_grid,
        "A": params.A,
        "r": params.r,
        "c1": params.c1,
        "replications": replications,
        "seed": seed,
        "method": method,
        "n_mc": n_mc,
        "bootstrap": bootstrap,
        "grid_depth": grid_depth,
        "min_leaf_count": min_leaf_count,
        "lookahead": lookahead,
    }
    tasks = []
    for i, n in enumerate(n_grid):
        size = select_sieve_size(n, params)
        for rep in range(replications):
            data_seed, mc_seed = _run_seeds(seed, i, rep)
            tasks.append((spec_desc, n, size, method, data_seed, mc_seed, n_mc, greedy_opts))

    records = []
    try:
        for rep_index, rec in enumerate(_map(_convergence_run, tasks, threads)):
            rec = {"spec": _spec_name(spec), "replication": rep_index % replications, **rec}
            records.append(rec)
            log.info("n=%d rep=%d I=%d error=%.4f", rec["n"], rec["replication"], rec["I"], rec["hellinger"])
    except Exception as exc:  # noqa: BLE001 - re-raised with context
        raise StudyError(f"convergence run failed: {exc}", records) from exc

    errors = np.array([r["hellinger"] for r in records]).reshape(len(n_grid), replications)
    medians = np.median(errors, axis=1)
    slope = fit_loglog_slope(n_grid, medians)
    rng = np.random.Generator(np.random.Philox(seed))
    boot = np.empty(bootstrap)
    for b in range(bootstrap):
        pick = rng.integers(0, replications, size=errors.shape)
        boot[b] = fit_loglog_slope(n_grid, np.median(np.take_along_axis(errors, pick, axis=1), axis=1))
    lo, hi = np.percentile(boot, [5.0, 95.0])
    per_n = []
    for i, n in enumerate(n_grid):
        size = select_sieve_size(n, params)
        delta, _ = theoretical_rate(n, size, params.r) if size >= 2 else (float("nan"), None)
        per_n.append({"n": n, "I": size, "median_hellinger": float(medians[i]), "delta": delta})
    summary = {
        "per_n": per_n,
        "slope": slope,
        "slope_band_90": [float(lo), float(hi)],
        "reference_exponent": -params.r / (2.0 * params.r + 1.0),
        "strictly_decreasing": bool(np.all(np.diff(medians) < 0)),
    }
    return ExperimentReport("convergence", config, records, summary)


# ---------------------------------------------------------------------------
# variable selection


def run_variable_selection_study(
    inner,
    p: int,
    relevant: Sequence[int],
    n: int = 10_000,
    size: int = 32,
    replications: int = 5,
    seed: int = 0,
    min_gain: float = 0.0,
    lookahead: int = STUDY_LOOKAHEAD,
) -> ExperimentReport:
    """Share of greedy cuts that land on the coordinates the density depends on.

    ``inner`` is placed on the ``relevant`` coordinates of a ``p``-cube and
    the remaining coordinates are uniform.
    """
    relevant = tuple(int(c) for c in relevant)
    inner_obj = resolve(inner)
    spec = ProductEmbedding(inner_obj, p, relevant)
    config = {
        "inner": inner if isinstance(inner, str) else spec_to_dict(inner_obj),
        "p": p,
        "relevant": list(relevant),
        "n": n,
        "I": size,
        "replications": replications,
        "seed": seed,
        "min_gain": min_gain,
        "lookahead": lookahead,
    }
    records = []
    try:
        for rep in range(replications):
            data_seed, _ = _run_seeds(seed, rep)
            start = time.perf_counter()
            data = sample_density(spec, n, data_seed)
            fit = greedy_fit(data, size, GreedyOptions(min_gain=min_gain, lookahead=lookahead))
            dims = [c.dim for c in fit.trace]
            on_relevant = sum(1 for d in dims if d in relevant)
            records.append({
                "replication": rep,
                "seed": data_seed,
                "cuts": len(dims),
                "relevant_cuts": on_relevant,
                "relevant_fraction": on_relevant / len(dims) if dims else None,
                "cut_dims": dims,
                "score": fit.score,
                "wall_time": time.perf_counter() - start,
            })
    except Exception as exc:  # noqa: BLE001
        raise StudyError(f"variable-selection run failed: {exc}", records) from exc
    fractions = [r["relevant_fraction"] for r in records if r["relevant_fraction"] is not None]
    summary = {
        "median_relevant_fraction": float(np.median(fractions)) if fractions else None,
        "median_cuts": float(np.median([r["cuts"] for r in records])),
        "max_cuts": max(r["cuts"] for r in records),
    }
    return ExperimentReport("varsel", config, records, summary)


# ---------------------------------------------------------------------------
# sparsity


def run_sparsity_diagnostic(
    spec,
    level: Optional[int] = None,
    mode: str = "isotropic",
    target: str = "sqrt_f",
    alpha: Optional[float] = None,
    rank_range=(10, 1000),
    max_listed: int = 4096,
) -> ExperimentReport:
    """Haar spectrum of a reference density and its power-law decay fit.

    The report's ``tables`` hold plot-ready columns for three views: all
    coefficients from coarse to fine, sorted magnitudes against rank, and
    the same against log rank.  Coefficients are listed in the JSON only
    when there are at most ``max_listed`` of them.
    """
    if target not in ("f", "sqrt_f"):
        raise ValueError("target must be 'f' or 'sqrt_f'")
    spec_obj = resolve(spec)
    p = spec_obj.p
    L = DEFAULT_LEVELS.get(p, 4) if level is None else int(level)
    if (1 << (L * p)) > MAX_GRID_CELLS:
        raise MemoryError(f"grid 2^({L}*{p}) exceeds the budget of {MAX_GRID_CELLS} cells")
    start = time.perf_counter()
    grid = grid_density(spec_obj, L)
    values = np.sqrt(grid) if target == "sqrt_f" else grid
    spectrum = haar_analyze(values, mode=mode, target=target)

    wav = ~spectrum.constant_mask
    mags = np.sort(np.abs(spectrum.coeffs[wav]))[::-1]
    try:
        beta, C, diag = estimate_decay_exponent(spectrum, rank_range)
    except ValueError as exc:
        beta, C, diag = None, None, {"error": str(exc)}
    holder = None
    if alpha is not None:
        tensor = spectrum if (mode == "tensor" and target == "sqrt_f") else \
            haar_analyze(np.sqrt(grid), mode="tensor", target="sqrt_f")
        holder = mixed_holder_constant(tensor, alpha)

    summary = {
        "L": L,
        "nonzero": len(spectrum),
        "energy": spectrum.energy(),
        "beta_hat": beta,
        "C_hat": C,
        "fit": diag,
        "alpha": alpha,
        "holder_C_hat": holder,
    }
    if len(spectrum) <= max_listed:
        summary["coefficients"] = [
            {"levels": list(idx.levels), "offsets": list(idx.offsets), "typebits": idx.typebits, "coeff": c}
            for idx, c in spectrum.items()
        ]
    config = {
        "spec": spec if isinstance(spec, str) else spec_to_dict(spec_obj),
        "level": L,
        "mode": mode,
        "target": target,
        "alpha": alpha,
        "rank_range": list(rank_range),
    }
    report = ExperimentReport("sparsity", config, [{"wall_time": time.perf_counter() - start}], summary)
    ranks = np.arange(1, mags.size + 1)
    report.tables = {
        "by_level": [
            {"order": i, "level": int(spectrum.levels[i].max()), "coeff": float(spectrum.coeffs[i])}
            for i in range(len(spectrum))
        ],
        "sorted": [
            {"rank": int(k), "log10_rank": float(np.log10(k)), "abs_coeff": float(c)}
            for k, c in zip(ranks, mags)
        ],
    }
    report.spectrum = spectrum
    return report
