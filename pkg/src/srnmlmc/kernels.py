"""Path simulation: exact SSA, tau-leap, and coupled fine/coarse tau-leap pairs.

The hot loops live in the compiled ``_ckernels`` extension when it is
importable and in ``_pykernels`` otherwise. Both produce identical numbers
for identical stream keys. Set ``SRNMLMC_BACKEND=python`` to force the
fallback.

Every replicate draws from its own counter-based streams, so a batch can be
split over threads in any way without changing the results.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _pykernels
from .network import Observable, ReactionNetwork, as_state, sensitive_set

SSA_LEVEL = -1


def _select_backend():
    choice = os.environ.get("SRNMLMC_BACKEND", "auto").lower()
    if choice == "python":
        return _pykernels
    try:
        from . import _ckernels
    except ImportError:
        if choice == "compiled":
            raise
        return _pykernels
    return _ckernels


_impl = _select_backend()
BACKEND: str = _impl.BACKEND


def default_workers() -> int:
    if _impl is _pykernels:
        return 1
    return os.cpu_count() or 1


def set_backend(name: str) -> str:
    """Switch backend at runtime ("compiled" or "python"); returns the previous name."""
    global _impl, BACKEND
    previous = BACKEND
    if name == "python":
        _impl = _pykernels
    elif name == "compiled":
        from . import _ckernels
        _impl = _ckernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = _impl.BACKEND
    return previous


def compiled_available() -> bool:
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return False
    return True


@dataclass(frozen=True)
class LevelSpec:
    """Time grid of level ``level``: step ``dt0 * 2**-level`` on ``[0, final_time]``."""

    level: int
    dt0: float
    final_time: float

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("level must be non-negative")
        if not (self.dt0 > 0 and self.final_time > 0):
            raise ValueError("dt0 and final_time must be positive")
        ratio = self.final_time / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ValueError(f"final_time / dt = {ratio} is not a positive integer")

    @property
    def dt(self) -> float:
        return self.dt0 * 2.0 ** (-self.level)

    @property
    def n_steps(self) -> int:
        return int(round(self.final_time / self.dt))


@dataclass(frozen=True)
class CoupledSample:
    g_fine: float
    g_coarse: float
    log_likelihood: float
    is_steps: int
    is_jumps: int
    poisson_draws: int
    active_draws: int

    @property
    def weighted_diff(self) -> float:
        return (self.g_fine - self.g_coarse) * math.exp(self.log_likelihood)


@dataclass
class CoupledBatch:
    """Column arrays for a run of consecutive replicates."""

    g_fine: np.ndarray
    g_coarse: np.ndarray
    log_likelihood: np.ndarray
    is_steps: np.ndarray
    is_jumps: np.ndarray
    active_draws: np.ndarray
    poisson_draws: int  # per sample, identical for every replicate

    def __len__(self):
        return len(self.g_fine)

    @property
    def diff(self) -> np.ndarray:
        return self.g_fine - self.g_coarse

    @property
    def weighted_diff(self) -> np.ndarray:
        return self.diff * np.exp(self.log_likelihood)

    def sample(self, i: int) -> CoupledSample:
        return CoupledSample(
            float(self.g_fine[i]), float(self.g_coarse[i]), float(self.log_likelihood[i]),
            int(self.is_steps[i]), int(self.is_jumps[i]), self.poisson_draws, int(self.active_draws[i]),
        )


def _chunks(start: int, count: int, workers: int):
    if workers <= 1 or count < 2 * workers:
        return [(start, count)]
    n = min(count, workers * 4)
    bounds = np.linspace(0, count, n + 1).astype(np.int64)
    return [(start + int(a), int(b - a)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _fan_out(fn, start: int, count: int, workers: int | None):
    workers = default_workers() if workers is None else max(1, int(workers))
    parts = _chunks(start, count, workers)
    if len(parts) == 1:
        return [fn(*parts[0])]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda p: fn(*p), parts))


def _net_arrays(net: ReactionNetwork, x0):
    return net.stoich, net.reactant_order, net.rates, as_state(x0, net.num_species)


def _check_delta(delta: float):
    if not (0.0 <= delta < 1.0):
        raise ValueError(f"delta must lie in [0, 1), got {delta!r}")


# ---------------------------------------------------------------------------
# batch samplers

def ssa_batch(net: ReactionNetwork, x0, T: float, seed: int, count: int,
              start: int = 0, workers: int | None = None):
    """Terminal states and jump counts of ``count`` exact paths."""
    x0 = as_state(x0, net.num_species)
    if np.any(x0 < 0):
        raise ValueError("SSA needs a non-negative initial state")
    stoich, order, rates, x0 = _net_arrays(net, x0)

    def run(s, c):
        return _impl.ssa_batch(stoich, order, rates, x0, float(T), seed, SSA_LEVEL, s, c)

    parts = _fan_out(run, start, count, workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def tau_leap_batch(net: ReactionNetwork, x0, T: float, dt: float, seed: int, count: int,
                   level: int = 0, start: int = 0, workers: int | None = None):
    """Terminal states of ``count`` tau-leap paths plus per-path positive-mean draw counts.

    ``level`` only selects the random streams; the grid is set by ``dt``.
    """
    n_steps = int(round(T / dt))
    if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * T:
        raise ValueError(f"T / dt = {T / dt} is not a positive integer")
    stoich, order, rates, x0 = _net_arrays(net, x0)

    def run(s, c):
        return _impl.tau_leap_batch(stoich, order, rates, x0, float(dt), n_steps, seed, level, s, c)

    parts = _fan_out(run, start, count, workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def scheduled_draws(net: ReactionNetwork, n_steps: int, coupled: bool) -> int:
    """Poisson variates a kernel schedules per path: one per reaction slot per step."""
    return (3 if coupled else 1) * net.num_reactions * n_steps


def coupled_batch(net: ReactionNetwork, x0, T: float, spec: LevelSpec, seed: int, count: int,
                  delta: float = 0.0, observable: Observable | None = None,
                  start: int = 0, workers: int | None = None) -> CoupledBatch:
    """``count`` coupled pairs at ``spec.level``; ``delta > 0`` switches the change of measure on."""
    _check_delta(delta)
    if spec.level < 1:
        raise ValueError("coupled pairs need level >= 1")
    if abs(spec.final_time - T) > 1e-12 * T:
        raise ValueError("LevelSpec final_time does not match T")
    g = observable if observable is not None else Observable.projection(0)
    w = g.weight_vector(net.num_species)
    sens = np.zeros(net.num_reactions, dtype=np.uint8)
    sens[sorted(sensitive_set(g, net))] = 1
    stoich, order, rates, x0 = _net_arrays(net, x0)
    dt, n = spec.dt, spec.n_steps

    def run(s, c):
        return _impl.coupled_batch(stoich, order, rates, x0, dt, n, seed, spec.level, s, c,
                                   float(delta), w, sens)

    parts = _fan_out(run, start, count, workers)
    cols = [np.concatenate([p[i] for p in parts]) for i in range(6)]
    return CoupledBatch(cols[0], cols[1], cols[2], cols[3], cols[4], cols[5],
                        scheduled_draws(net, n, coupled=True))


# ---------------------------------------------------------------------------
# single paths

def ssa_path(net: ReactionNetwork, x0, T: float, seed: int, replicate: int = 0):
    states, jumps = ssa_batch(net, x0, T, seed, 1, start=replicate, workers=1)
    return states[0], int(jumps[0])


def tau_leap_path(net: ReactionNetwork, x0, T: float, dt: float, seed: int,
                  replicate: int = 0, level: int = 0):
    states, _ = tau_leap_batch(net, x0, T, dt, seed, 1, level=level, start=replicate, workers=1)
    return states[0]


def coupled_pair(net: ReactionNetwork, x0, T: float, spec: LevelSpec, seed: int,
                 replicate: int = 0, observable: Observable | None = None) -> CoupledSample:
    return coupled_batch(net, x0, T, spec, seed, 1, 0.0, observable, replicate, 1).sample(0)


def coupled_pair_is(net: ReactionNetwork, x0, T: float, spec: LevelSpec, delta: float,
                    observable: Observable, seed: int, replicate: int = 0) -> CoupledSample:
    return coupled_batch(net, x0, T, spec, seed, 1, delta, observable, replicate, 1).sample(0)


# ---------------------------------------------------------------------------
# recorded trajectories (pure-Python kernels; identical numbers to the compiled ones)

def coupled_trajectory(net: ReactionNetwork, x0, T: float, spec: LevelSpec, seed: int,
                       replicate: int = 0, delta: float = 0.0,
                       observable: Observable | None = None, check_likelihood: bool = False):
    """Rows ``(t, fine..., coarse..., cumulative log-likelihood)`` at every fine grid time."""
    _check_delta(delta)
    if spec.level < 1:
        raise ValueError("coupled pairs need level >= 1")
    g = observable if observable is not None else Observable.projection(0)
    w = g.weight_vector(net.num_species)
    sens = np.zeros(net.num_reactions, dtype=np.uint8)
    sens[sorted(sensitive_set(g, net))] = 1
    stoich, order, rates, x0 = _net_arrays(net, x0)
    rows = []

    def record(_rep, t, zf, zc, ll):
        rows.append((t, *zf, *zc, ll))

    _pykernels.coupled_batch(stoich, order, rates, x0, spec.dt, spec.n_steps, seed, spec.level,
                             replicate, 1, float(delta), w, sens, record=record,
                             check_likelihood=check_likelihood)
    return rows


def ssa_trajectory(net: ReactionNetwork, x0, T: float, seed: int, replicate: int = 0):
    """Jump times and states ``(t, x...)`` of one exact path, starting at t = 0."""
    stoich, order, rates, x0 = _net_arrays(net, x0)
    rows = []
    _pykernels.ssa_batch(stoich, order, rates, x0, float(T), seed, SSA_LEVEL, replicate, 1,
                         record=lambda _rep, t, x: rows.append((t, *x)))
    return rows


def step_log_likelihood(delta_a, lam, dt, k):
    """log of pmf(k; delta_a*dt) / pmf(k; lam*dt); vectorised over array inputs."""
    if np.ndim(delta_a) or np.ndim(lam) or np.ndim(dt) or np.ndim(k):
        return _impl.step_log_likelihood_array(delta_a, lam, dt, k)
    return _impl.step_log_likelihood(float(delta_a), float(lam), float(dt), int(k))
