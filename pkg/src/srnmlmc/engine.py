"""Multilevel Monte Carlo estimation on top of the path kernels.

Level ``L0`` samples plain tau-leap values of g; every finer level samples
the weighted coupled difference ``(g_l - g_{l-1}) * L_l``. Samples are
allocated by the usual variance/cost rule, levels are added until the bias
estimate falls below ``TOL / sqrt(2)``, and the sample counts are topped up
until the statistical error is below ``TOL / sqrt(2)`` as well.

Work is measured in scheduled Poisson variates, which keeps the allocation
(and therefore the estimate) reproducible for a given seed. Wall-clock
seconds are recorded alongside.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from statistics import NormalDist

import numpy as np

from . import kernels
from .kernels import LevelSpec
from .network import ModelSpec, Observable

KURTOSIS_UNDEFINED = math.inf
DEFAULT_PILOT = 1000
ALPHA_FLOOR = 0.5
BETA_GUESS = 1.0
L0_ADVISORY_RATIO = 0.1


class MlmcError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# moments

class Moments:
    """Streaming mean and central moments 2..4, mergeable in a fixed order."""

    __slots__ = ("n", "mean", "m2", "m3", "m4", "abs_sum")

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = self.m3 = self.m4 = 0.0  # sums of powered deviations
        self.abs_sum = 0.0

    @classmethod
    def of(cls, values) -> "Moments":
        y = np.asarray(values, dtype=np.float64)
        out = cls()
        if y.size == 0:
            return out
        mu = float(y.mean())
        d = y - mu
        d2 = d * d
        out.n = int(y.size)
        out.mean = mu
        out.m2 = float(d2.sum())
        out.m3 = float((d2 * d).sum())
        out.m4 = float((d2 * d2).sum())
        out.abs_sum = float(np.abs(y).sum())
        return out

    def merge(self, other: "Moments") -> "Moments":
        if other.n == 0:
            return self
        if self.n == 0:
            for name in self.__slots__:
                setattr(self, name, getattr(other, name))
            return self
        na, nb = self.n, other.n
        n = na + nb
        delta = other.mean - self.mean
        d_n = delta / n
        m2 = self.m2 + other.m2 + delta * d_n * na * nb
        m3 = (self.m3 + other.m3 + delta * d_n * d_n * na * nb * (na - nb)
              + 3.0 * d_n * (na * other.m2 - nb * self.m2))
        m4 = (self.m4 + other.m4
              + delta * d_n ** 3 * na * nb * (na * na - na * nb + nb * nb)
              + 6.0 * d_n * d_n * (na * na * other.m2 + nb * nb * self.m2)
              + 4.0 * d_n * (na * other.m3 - nb * self.m3))
        self.mean = self.mean + d_n * nb
        self.n, self.m2, self.m3, self.m4 = n, m2, m3, m4
        self.abs_sum += other.abs_sum
        return self

    def add(self, values) -> "Moments":
        return self.merge(Moments.of(values))

    @property
    def variance(self) -> float:
        return self.m2 / self.n if self.n else 0.0

    @property
    def kurtosis(self) -> float:
        v = self.variance
        # v * v can underflow long before v itself reaches zero
        if v * v <= 0.0:
            return KURTOSIS_UNDEFINED
        return (self.m4 / self.n) / (v * v)

    @property
    def mean_abs(self) -> float:
        return self.abs_sum / self.n if self.n else 0.0


# ---------------------------------------------------------------------------
# per-level statistics

@dataclass
class LevelStats:
    level: int
    dt: float
    samples: int
    mean_diff: float
    var_diff: float
    kurtosis: float
    mean_abs_diff: float
    cost_per_sample_draws: float
    cost_per_sample_seconds: float
    avg_is_steps: float

    @property
    def std_error(self) -> float:
        return math.sqrt(self.var_diff / self.samples) if self.samples else math.inf

    def as_row(self) -> list:
        return [self.level, self.dt, self.samples, self.mean_diff, self.var_diff, self.kurtosis,
                self.mean_abs_diff, self.cost_per_sample_draws, self.cost_per_sample_seconds,
                self.avg_is_steps]


LEVEL_COLUMNS = ["level", "dt", "samples", "mean_diff", "var_diff", "kurtosis", "mean_abs_diff",
                 "cost_per_sample_draws", "cost_per_sample_seconds", "avg_is_steps"]


def level_stats(samples, level: int = 0, dt: float = math.nan, draws_per_sample: float = 0.0,
                seconds_per_sample: float = 0.0, avg_is_steps: float = 0.0) -> LevelStats:
    """Population moments of the weighted level differences (kurtosis without bias correction)."""
    mom = samples if isinstance(samples, Moments) else Moments.of(samples)
    if mom.n < 2:
        raise ValueError("level statistics need at least 2 samples")
    return LevelStats(level, dt, mom.n, mom.mean, mom.variance, mom.kurtosis, mom.mean_abs,
                      float(draws_per_sample), float(seconds_per_sample), float(avg_is_steps))


def sample_variance_std(V: float, kappa: float, M: int) -> float:
    """Standard deviation of the sample variance estimator for M samples."""
    if M < 2:
        raise ValueError("M must be at least 2")
    if V == 0.0:
        return 0.0
    return V / math.sqrt(M) * math.sqrt((kappa - 1.0) + 2.0 / (M - 1))


def optimal_samples(V, W, tol: float) -> np.ndarray:
    """Samples per level minimising work subject to total variance TOL^2 / 2."""
    V = np.asarray(V, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if V.shape != W.shape:
        raise ValueError("V and W must have the same length")
    if np.any(V < 0) or np.any(W <= 0) or not tol > 0:
        raise ValueError("need V >= 0, W > 0 and TOL > 0")
    total = float(np.sum(np.sqrt(V * W)))
    m = np.ceil(2.0 * tol ** -2 * np.sqrt(V / W) * total)
    return np.maximum(m, 2).astype(np.int64)


@dataclass
class RateFit:
    alpha: float
    beta: float
    gamma: float
    r2_alpha: float
    r2_beta: float
    r2_gamma: float
    levels: list = field(default_factory=list)


def _slope(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def fit_rates(stats, l0: int = 0, cost: str = "draws") -> RateFit:
    """Least-squares slopes of log2 |mean|, log2 V, log2 W against level, for levels > L0."""
    rows = [s for s in stats if s.level >= l0 + 1]
    results = {}
    for name, getter, sign in (
        ("alpha", lambda s: abs(s.mean_diff), -1.0),
        ("beta", lambda s: s.var_diff, -1.0),
        ("gamma", (lambda s: s.cost_per_sample_draws) if cost == "draws"
         else (lambda s: s.cost_per_sample_seconds), 1.0),
    ):
        pts = [(s.level, getter(s)) for s in rows if getter(s) > 0 and math.isfinite(getter(s))]
        if len(pts) < 3:
            raise ValueError(f"fewer than 3 usable levels to fit {name}")
        lv, vals = zip(*pts)
        slope, r2 = _slope(lv, np.log2(vals))
        results[name] = (sign * slope, r2)
    return RateFit(results["alpha"][0], results["beta"][0], results["gamma"][0],
                   results["alpha"][1], results["beta"][1], results["gamma"][1],
                   [s.level for s in rows])


def kurtosis_slope(stats, last: int = 5) -> float:
    rows = [s for s in stats if math.isfinite(s.kurtosis)][-last:]
    if len(rows) < 2:
        raise ValueError("need at least 2 levels with finite kurtosis")
    return _slope([s.level for s in rows], np.log2([s.kurtosis for s in rows]))[0]


def bias_estimate(stats, alpha: float) -> float:
    """Tail-sum bias heuristic from the two finest levels."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    L = stats[-1].level
    tail = stats[-2:]
    return max(abs(s.mean_diff) * 2.0 ** (alpha * (s.level - L)) / (2.0 ** alpha - 1.0) for s in tail)


# ---------------------------------------------------------------------------
# level sampling

DRAW_CHUNK = 1 << 19


class LevelSampler:
    """Accumulates samples of one level; new replicates continue where the last batch stopped."""

    def __init__(self, model: ModelSpec, level: int, l0: int, dt0: float, delta: float,
                 observable: Observable, seed: int, workers: int | None = None):
        self.model = model
        self.spec = LevelSpec(level, dt0, model.final_time)
        self.is_base = level == l0
        self.delta = delta
        self.observable = observable
        self.seed = seed
        self.workers = workers
        self.moments = Moments()
        self.is_steps_sum = 0
        self.seconds = 0.0
        net = model.network
        if self.is_base:
            self.draws_per_sample = kernels.scheduled_draws(net, self.spec.n_steps, coupled=False)
        else:
            self.draws_per_sample = kernels.scheduled_draws(net, self.spec.n_steps, coupled=True)

    @property
    def count(self) -> int:
        return self.moments.n

    def draw(self, extra: int) -> None:
        # bounded chunks keep memory flat for large top-ups
        while extra > 0:
            n = min(extra, DRAW_CHUNK)
            self._draw(n)
            extra -= n

    def _draw(self, extra: int) -> None:
        m = self.model
        start = self.moments.n
        t0 = time.perf_counter()
        if self.is_base:
            states, _ = kernels.tau_leap_batch(m.network, m.x0, m.final_time, self.spec.dt, self.seed,
                                               extra, level=self.spec.level, start=start,
                                               workers=self.workers)
            w = self.observable.weight_vector(m.network.num_species)
            y = states.astype(np.float64) @ w
        else:
            batch = kernels.coupled_batch(m.network, m.x0, m.final_time, self.spec, self.seed, extra,
                                          self.delta, self.observable, start=start, workers=self.workers)
            y = batch.weighted_diff
            self.is_steps_sum += int(batch.is_steps.sum())
        self.seconds += time.perf_counter() - t0
        self.moments.add(y)

    def stats(self) -> LevelStats:
        n = self.moments.n
        return level_stats(self.moments, self.spec.level, self.spec.dt, self.draws_per_sample,
                           self.seconds / n, self.is_steps_sum / n)


def _floored_variances(stats) -> np.ndarray:
    V = np.array([s.var_diff for s in stats], dtype=np.float64)
    out = V.copy()
    for i in np.flatnonzero(V == 0.0):
        siblings = [V[k] for k in (i - 1, i + 1) if 0 <= k < len(V) and V[k] > 0]
        if siblings:
            out[i] = min(siblings) * 2.0 ** (-BETA_GUESS)
    return out


@dataclass
class MlmcResult:
    estimate: float
    statistical_error: float
    bias_estimate: float
    total_work: float
    total_seconds: float
    levels: list
    rates: dict | None
    config: dict

    def to_dict(self) -> dict:
        out = asdict(self)
        out["levels"] = [asdict(s) for s in self.levels]
        return out


def mlmc_estimate(model: ModelSpec, tol: float, delta: float = 0.0, use_is: bool = True,
                  l0: int | None = None, dt0: float | None = None, seed: int = 0,
                  max_level: int = 20, observable: Observable | None = None,
                  pilot: int = DEFAULT_PILOT, workers: int | None = None,
                  confidence: float | None = None) -> MlmcResult:
    """Adaptive MLMC estimate of E[g(X(T))].

    By default the root-mean-square error is kept below ``tol`` (bias and
    statistical error each at most ``tol / sqrt(2)``). With ``confidence=p``
    the target is instead ``|error| <= tol`` with probability about ``p``:
    bias at most ``tol / 2`` and ``z_p`` standard errors at most ``tol / 2``.
    """
    if not tol > 0:
        raise ValueError("TOL must be positive")
    if confidence is None:
        bias_budget = tol / math.sqrt(2.0)
        alloc_tol = tol
    else:
        if not 0.0 < confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")
        z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
        bias_budget = tol / 2.0
        # optimal_samples spends a variance of alloc_tol**2 / 2
        alloc_tol = math.sqrt(2.0) * tol / (2.0 * z)
    l0 = model.l0 if l0 is None else int(l0)
    dt0 = model.dt0_value if dt0 is None else float(dt0)
    g = observable or model.observable
    eff_delta = float(delta) if use_is else 0.0
    kernels._check_delta(eff_delta)
    if pilot < 2:
        raise ValueError("pilot size must be at least 2")

    samplers: list[LevelSampler] = []

    def add_level():
        level = l0 + len(samplers)
        if level > max_level:
            raise MlmcError(f"bias estimate still above target at the level cap {max_level}")
        s = LevelSampler(model, level, l0, dt0, eff_delta, g, seed, workers)
        s.draw(pilot)
        samplers.append(s)

    # L0 plus three coupled levels gives the first rate fit three points
    for _ in range(4):
        add_level()

    alpha = 1.0
    while True:
        stats = [s.stats() for s in samplers]
        try:
            alpha = max(fit_rates(stats, l0).alpha, ALPHA_FLOOR)
        except ValueError:
            alpha = max(alpha, ALPHA_FLOOR)
        bias = bias_estimate(stats, alpha)
        if bias > bias_budget:
            add_level()
            continue
        V = _floored_variances(stats)
        W = np.array([s.cost_per_sample_draws for s in stats], dtype=np.float64)
        target = optimal_samples(V, W, alloc_tol)
        pending = False
        for s, m in zip(samplers, target):
            if m > s.count:
                s.draw(int(m) - s.count)
                pending = True
        if not pending:
            break

    stats = [s.stats() for s in samplers]
    estimate = float(sum(s.mean_diff for s in stats))
    stat_err = math.sqrt(sum(s.var_diff / s.samples for s in stats))
    try:
        fit = fit_rates(stats, l0)
        rates = asdict(fit)
    except ValueError:
        rates = None
    config = {
        "model": model.name, "observable": g.describe(model.network), "tol": tol,
        "delta": eff_delta, "use_is": bool(use_is), "l0": l0, "L": stats[-1].level,
        "dt0": dt0, "seed": seed, "pilot": pilot, "confidence": confidence,
        "backend": kernels.BACKEND,
    }
    return MlmcResult(
        estimate=estimate,
        statistical_error=stat_err,
        bias_estimate=bias,
        total_work=float(sum(s.samples * s.cost_per_sample_draws for s in stats)),
        total_seconds=float(sum(smp.seconds for smp in samplers)),
        levels=stats,
        rates=rates,
        config=config,
    )


# ---------------------------------------------------------------------------
# reference estimators and diagnostics

@dataclass
class McResult:
    estimate: float
    statistical_error: float
    samples: int
    work_jumps: int
    seconds: float


def mc_ssa_estimate(model: ModelSpec, tol: float, seed: int = 0, pilot: int = DEFAULT_PILOT,
                    observable: Observable | None = None, workers: int | None = None) -> McResult:
    """Plain Monte Carlo over exact paths, sized so the statistical error is about TOL / sqrt(2)."""
    g = observable or model.observable
    w = g.weight_vector(model.network.num_species)
    t0 = time.perf_counter()
    states, jumps = kernels.ssa_batch(model.network, model.x0, model.final_time, seed, pilot,
                                      workers=workers)
    var = float(np.var(states @ w))
    total = max(pilot, int(math.ceil(2.0 * tol ** -2 * var)))
    if total > pilot:
        more, more_jumps = kernels.ssa_batch(model.network, model.x0, model.final_time, seed,
                                             total - pilot, start=pilot, workers=workers)
        states = np.concatenate([states, more])
        jumps = np.concatenate([jumps, more_jumps])
    y = states @ w
    return McResult(float(y.mean()), float(y.std() / math.sqrt(total)), total,
                    int(jumps.sum()), time.perf_counter() - t0)


def tau_leap_estimate(model: ModelSpec, level: int, samples: int, seed: int = 0,
                      observable: Observable | None = None, workers: int | None = None):
    """Single-level tau-leap mean and standard error at ``dt0 * 2**-level``."""
    g = observable or model.observable
    dt = model.dt0_value * 2.0 ** (-level)
    states, _ = kernels.tau_leap_batch(model.network, model.x0, model.final_time, dt, seed, samples,
                                       level=level, workers=workers)
    y = states @ g.weight_vector(model.network.num_species)
    return float(y.mean()), float(y.std() / math.sqrt(samples))


def l0_diagnostic(model: ModelSpec, l0: int | None = None, samples: int = 10_000, seed: int = 0,
                  observable: Observable | None = None, workers: int | None = None) -> dict:
    """Advisory check that Var[g_{L0+1} - g_{L0}] is well below Var[g_{L0}]."""
    l0 = model.l0 if l0 is None else l0
    g = observable or model.observable
    dt0 = model.dt0_value
    base = LevelSampler(model, l0, l0, dt0, 0.0, g, seed, workers)
    base.draw(samples)
    nxt = LevelSampler(model, l0 + 1, l0, dt0, 0.0, g, seed, workers)
    nxt.draw(samples)
    v0, v1 = base.moments.variance, nxt.moments.variance
    ratio = v1 / v0 if v0 > 0 else math.inf
    return {"l0": l0, "var_base": v0, "var_next_diff": v1, "ratio": ratio,
            "ok": ratio < L0_ADVISORY_RATIO}

