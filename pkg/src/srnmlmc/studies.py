"""Experiment harness: convergence tables, coupling histograms, IS-jump
diagnostics and work-versus-tolerance sweeps, written as plot-ready CSV.

Every configuration in a study draws from its own seed, derived from the
user seed and the configuration, so rows of one table are statistically
independent of each other and the whole table is reproducible.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .engine import (
    LEVEL_COLUMNS,
    LevelStats,
    fit_rates,
    level_stats,
    mc_ssa_estimate,
    mlmc_estimate,
)
from .kernels import LevelSpec
from .network import ModelSpec, Observable
from .rng import stream_id

SMOKE_SAMPLES = 50_000
FULL_SAMPLES = 200_000


def config_seed(seed: int, tag: str, value: float = 0.0) -> int:
    """Seed for one configuration of a study, independent across configurations."""
    code = int.from_bytes(tag.encode()[:8].ljust(8, b"\0"), "little")
    return stream_id(seed, code, int(round(value * 1_000_000)), 0x5EED)


def header_line(seed, model: str, delta, extra: dict | None = None) -> str:
    if isinstance(delta, (list, tuple)):
        delta = ",".join(f"{d:g}" for d in delta)
    parts = [f"seed={seed}", f"model={model}", f"delta={delta}", f"version={__version__}"]
    parts += [f"{k}={v}" for k, v in (extra or {}).items()]
    return "# " + " ".join(parts)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path, header: str, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    """Header comment, column names and rows (as strings) of a harness CSV."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        reader = csv.reader(fh)
        columns = next(reader)
        return header, columns, list(reader)


# ---------------------------------------------------------------------------
# convergence tables

@dataclass
class ConvergenceRun:
    delta: float
    seed: int
    levels: list
    alpha: float
    beta: float
    gamma: float
    kappa_L: float
    r2_beta: float
    gamma_seconds: float = math.nan
    zero_fraction: list = field(default_factory=list)


def coupled_level_stats(model: ModelSpec, level: int, delta: float, samples: int, seed: int,
                        observable: Observable | None = None, dt0: float | None = None,
                        workers: int | None = None):
    """LevelStats of one coupled level plus the fraction of pairs with equal observables."""
    g = observable or model.observable
    spec = LevelSpec(level, model.dt0_value if dt0 is None else dt0, model.final_time)
    t0 = time.perf_counter()
    batch = kernels.coupled_batch(model.network, model.x0, model.final_time, spec, seed, samples,
                                  delta, g, workers=workers)
    seconds = time.perf_counter() - t0
    stats = level_stats(batch.weighted_diff, level, spec.dt, batch.poisson_draws,
                        seconds / samples, float(batch.is_steps.mean()))
    return stats, float(np.mean(batch.diff == 0.0)), batch


def convergence_study(model: ModelSpec, deltas, levels, samples: int, seed: int = 0,
                      observable: Observable | None = None, workers: int | None = None):
    """Per-level statistics and fitted rates for each delta (0 means no change of measure)."""
    runs = []
    for delta in deltas:
        run_seed = config_seed(seed, "conv", delta)
        stats, zeros = [], []
        for level in levels:
            s, z, _ = coupled_level_stats(model, level, delta, samples, run_seed, observable,
                                          workers=workers)
            stats.append(s)
            zeros.append(z)
        fit = fit_rates(stats, l0=min(levels) - 1)
        try:
            gamma_sec = fit_rates(stats, l0=min(levels) - 1, cost="seconds").gamma
        except ValueError:
            gamma_sec = math.nan
        runs.append(ConvergenceRun(delta, run_seed, stats, fit.alpha, fit.beta, fit.gamma,
                                   stats[-1].kurtosis, fit.r2_beta, gamma_sec, zeros))
    return runs


CONVERGENCE_COLUMNS = ["delta"] + LEVEL_COLUMNS + ["zero_fraction"]
RATE_COLUMNS = ["delta", "alpha", "beta", "gamma", "kappa_L", "r2_beta", "gamma_seconds"]


def write_convergence(out_dir, model: ModelSpec, runs, seed: int):
    out_dir = Path(out_dir)
    head = header_line(seed, model.name, [r.delta for r in runs])
    rows = [[r.delta] + s.as_row() + [z] for r in runs for s, z in zip(r.levels, r.zero_fraction)]
    a = write_csv(out_dir / "convergence.csv", head, CONVERGENCE_COLUMNS, rows)
    rows = [[r.delta, r.alpha, r.beta, r.gamma, r.kappa_L, r.r2_beta, r.gamma_seconds] for r in runs]
    b = write_csv(out_dir / "rates.csv", head, RATE_COLUMNS, rows)
    return a, b


# ---------------------------------------------------------------------------
# histograms

@dataclass
class Histogram:
    values: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def mass(self, value) -> float:
        hit = self.counts[self.values == value]
        return float(hit.sum()) / self.total if self.total else 0.0

    def conditional_mass(self, value, above=0) -> float:
        keep = self.values > above
        denom = self.counts[keep].sum()
        return float(self.counts[keep & (self.values == value)].sum()) / denom if denom else math.nan


def _histogram(values) -> Histogram:
    vals, counts = np.unique(np.asarray(values), return_counts=True)
    return Histogram(vals, counts.astype(np.int64))


def coupling_histogram(model: ModelSpec, level: int, delta: float, samples: int, seed: int = 0,
                       observable: Observable | None = None, workers: int | None = None) -> Histogram:
    """Histogram of g_fine - g_coarse (unweighted) over coupled pairs."""
    g = observable or model.observable
    spec = LevelSpec(level, model.dt0_value, model.final_time)
    batch = kernels.coupled_batch(model.network, model.x0, model.final_time, spec,
                                  config_seed(seed, "hist", delta), samples, delta, g, workers=workers)
    return _histogram(batch.diff)


def is_jump_histogram(model: ModelSpec, level: int, delta: float, samples: int, seed: int = 0,
                      observable: Observable | None = None, workers: int | None = None):
    """Histograms of the per-path IS jump total and of the number of IS steps."""
    g = observable or model.observable
    spec = LevelSpec(level, model.dt0_value, model.final_time)
    batch = kernels.coupled_batch(model.network, model.x0, model.final_time, spec,
                                  config_seed(seed, "isj", delta), samples, delta, g, workers=workers)
    return _histogram(batch.is_jumps), _histogram(batch.is_steps)


def write_histogram(path, hist: Histogram, header: str, value_name: str):
    rows = [[v.item(), int(c), int(c) / hist.total] for v, c in zip(hist.values, hist.counts)]
    return write_csv(path, header, [value_name, "count", "fraction"], rows)


# ---------------------------------------------------------------------------
# complexity

def parse_method(text: str):
    """``mc_ssa``, ``mlmc`` or ``mlmc_is:<delta>`` (bare ``mlmc_is`` means 0.75)."""
    name, _, arg = text.partition(":")
    if name in ("mc_ssa", "mlmc"):
        return name, 0.0
    if name == "mlmc_is":
        return name, float(arg) if arg else 0.75
    raise ValueError(f"unknown method {text!r}")


COMPLEXITY_COLUMNS = ["tol", "method", "delta", "repeat", "estimate", "error_bound", "levels",
                      "total_work", "work_unit", "total_seconds"]


def complexity_sweep(model: ModelSpec, tols, methods, seed: int = 0, repeats: int = 1,
                     observable: Observable | None = None, workers: int | None = None):
    """One row per (TOL, method, repeat): estimate, work in draws or jumps, and seconds."""
    rows = []
    for tol in tols:
        for text in methods:
            method, delta = parse_method(text)
            for rep in range(repeats):
                s = config_seed(seed, f"cx{rep}", tol)
                if method == "mc_ssa":
                    r = mc_ssa_estimate(model, tol, seed=s, observable=observable, workers=workers)
                    rows.append([tol, method, 0.0, rep, r.estimate, r.statistical_error, 0,
                                 float(r.work_jumps), "jumps", r.seconds])
                else:
                    r = mlmc_estimate(model, tol, delta, use_is=method == "mlmc_is", seed=s,
                                      observable=observable, workers=workers)
                    rows.append([tol, method, delta, rep, r.estimate,
                                 r.statistical_error + r.bias_estimate, r.config["L"],
                                 r.total_work, "draws", r.total_seconds])
    return rows


def work_slope(rows, method: str, delta: float = 0.0, column: str = "total_work") -> float:
    """Log-log slope of mean work against TOL for one method."""
    idx = COMPLEXITY_COLUMNS.index(column)
    by_tol: dict[float, list] = {}
    for row in rows:
        if row[1] == method and row[2] == delta:
            by_tol.setdefault(row[0], []).append(row[idx])
    tols = sorted(by_tol)
    work = [float(np.mean(by_tol[t])) for t in tols]
    return float(np.polyfit(np.log(tols), np.log(work), 1)[0])


def level_table(stats: list[LevelStats]):
    return [s.as_row() for s in stats]
