"""Pure-Python path kernels.

Reference implementation of the hot loops and the fallback when the compiled
``_ckernels`` extension is unavailable. Every floating-point operation is
ordered exactly as in ``_ckernels.pyx`` so the two backends agree bit for bit.
"""
from __future__ import annotations

import math

import numpy as np

from .rng import (
    MASK64,
    SSA_SUBSTREAM,
    TAU_LEAP_SUBSTREAM,
    Stream,
    poisson,
    stream_id,
)

BACKEND = "python"


def _props(rates, order_lists, x, out):
    # only consumed species gate a reaction; a negative bystander count does not
    for j, terms in enumerate(order_lists):
        a = rates[j]
        for i, order in terms:
            xi = x[i]
            if xi < order:
                a = 0.0
                break
            for m in range(order):
                a *= float(xi - m)
        out[j] = a


def _order_lists(order):
    return [[(i, int(o)) for i, o in enumerate(row) if o > 0] for row in np.asarray(order)]


def _change_lists(stoich):
    return [[(i, int(v)) for i, v in enumerate(row) if v != 0] for row in np.asarray(stoich)]


def _dot(w, x):
    s = 0.0
    for i in range(len(w)):
        s += w[i] * x[i]
    return s


def step_log_likelihood(delta_a: float, lam: float, dt: float, k: int) -> float:
    """log of the Poisson pmf ratio pmf(k; delta_a*dt) / pmf(k; lam*dt)."""
    return -dt * (delta_a - lam) + k * math.log(delta_a / lam)


def step_log_likelihood_array(delta_a, lam, dt, k):
    delta_a = np.asarray(delta_a, dtype=np.float64)
    out = np.empty(delta_a.shape)
    lam, dt, k = np.broadcast_arrays(lam, dt, k)
    for idx in np.ndindex(delta_a.shape):
        out[idx] = step_log_likelihood(float(delta_a[idx]), float(lam[idx]), float(dt[idx]), int(k[idx]))
    return out


def uniform_stream(seed, level, replicate, substream, n):
    s = Stream(stream_id(seed, level, replicate, substream))
    return np.array([s.uniform() for _ in range(n)])


def poisson_stream(seed, level, replicate, substream, mean, n):
    s = Stream(stream_id(seed, level, replicate, substream))
    return np.array([poisson(s, mean) for _ in range(n)], dtype=np.int64)


def ssa_batch(stoich, order, rates, x0, T, seed, level, rep_start, count, record=None):
    """Exact SSA (direct method) for replicates ``rep_start .. rep_start+count-1``.

    Returns terminal states ``(count, d)`` and jump counts. ``record``, when
    given, is called as ``record(rep, t, x)`` after the initial state and
    after every jump.
    """
    rates = [float(r) for r in rates]
    orders = _order_lists(order)
    changes = _change_lists(stoich)
    J, d = len(rates), len(x0)
    states = np.empty((count, d), dtype=np.int64)
    jumps = np.zeros(count, dtype=np.int64)
    a = [0.0] * J
    for r in range(count):
        rep = rep_start + r
        s = Stream(stream_id(seed, level, rep, SSA_SUBSTREAM))
        x = [int(v) for v in x0]
        t = 0.0
        n_jumps = 0
        if record is not None:
            record(rep, t, x)
        while True:
            _props(rates, orders, x, a)
            a0 = 0.0
            for j in range(J):
                a0 += a[j]
            if a0 <= 0.0:
                break
            tau = -math.log(s.uniform()) / a0
            if t + tau > T:
                break
            t += tau
            target = s.uniform() * a0
            cum = 0.0
            chosen = -1
            for j in range(J):
                if a[j] > 0.0:
                    chosen = j
                    cum += a[j]
                    if target < cum:
                        break
            for i, v in changes[chosen]:
                x[i] += v
            n_jumps += 1
            if record is not None:
                record(rep, t, x)
        states[r] = x
        jumps[r] = n_jumps
    return states, jumps


def tau_leap_batch(stoich, order, rates, x0, dt, n_steps, seed, level, rep_start, count):
    """Explicit tau-leap with ``n_steps`` steps of size ``dt``."""
    rates = [float(r) for r in rates]
    orders = _order_lists(order)
    changes = _change_lists(stoich)
    J, d = len(rates), len(x0)
    states = np.empty((count, d), dtype=np.int64)
    draws = np.zeros(count, dtype=np.int64)
    a = [0.0] * J
    k = [0] * J
    for r in range(count):
        rep = rep_start + r
        streams = [Stream(stream_id(seed, level, rep, TAU_LEAP_SUBSTREAM + j)) for j in range(J)]
        z = [int(v) for v in x0]
        n_draws = 0
        for _ in range(n_steps):
            _props(rates, orders, z, a)
            for j in range(J):
                mean = a[j] * dt
                if mean > 0.0:
                    n_draws += 1
                k[j] = poisson(streams[j], mean)
            for j in range(J):
                if k[j]:
                    for i, v in changes[j]:
                        z[i] += k[j] * v
        states[r] = z
        draws[r] = n_draws
    return states, draws


def coupled_batch(stoich, order, rates, x0, dt, n_steps, seed, level, rep_start, count,
                  delta, weights, sensitive, record=None, check_likelihood=False):
    """Coupled fine/coarse tau-leap pairs, optionally with the pathwise change of measure.

    ``n_steps`` fine steps of size ``dt``; the coarse path uses step ``2*dt``
    with its propensities frozen at the coarse grid points. With ``delta > 0``
    the residual rates of sensitive reactions are multiplied by
    ``dt**-delta`` whenever the fine and coarse propensities differ while the
    two observables coincide, and the log-likelihood ratio is accumulated.

    ``record(rep, t, z_fine, z_coarse, loglik)`` is called at t = 0 and after
    every fine step when given.
    """
    rates = [float(r) for r in rates]
    orders = _order_lists(order)
    changes = _change_lists(stoich)
    J = len(rates)
    w = [float(v) for v in weights]
    sens = [bool(v) for v in sensitive]
    use_is = delta > 0.0
    c = dt ** (-delta) if use_is else 1.0
    g_fine = np.empty(count)
    g_coarse = np.empty(count)
    loglik = np.zeros(count)
    is_steps = np.zeros(count, dtype=np.int64)
    is_jumps = np.zeros(count, dtype=np.int64)
    draws = np.zeros(count, dtype=np.int64)
    af = [0.0] * J
    ac = [0.0] * J
    kf = [0] * J
    kc = [0] * J
    for r in range(count):
        rep = rep_start + r
        streams = [Stream(stream_id(seed, level, rep, sub)) for sub in range(3 * J)]
        zf = [int(v) for v in x0]
        zc = [int(v) for v in x0]
        ll = 0.0
        n_is = 0
        n_is_jumps = 0
        n_draws = 0
        if record is not None:
            record(rep, 0.0, zf, zc, ll)
        for n in range(n_steps):
            if n % 2 == 0:
                _props(rates, orders, zc, ac)
            _props(rates, orders, zf, af)
            same_g = use_is and _dot(w, zf) == _dot(w, zc)
            for j in range(J):
                a_f = af[j]
                a_c = ac[j]
                a1 = a_f if a_f < a_c else a_c
                r2 = a_f - a1
                r3 = a_c - a1
                boosted = same_g and sens[j] and a_f != a_c
                if boosted:
                    a2 = c * r2
                    a3 = c * r3
                else:
                    a2 = r2
                    a3 = r3
                m1 = a1 * dt
                m2 = a2 * dt
                m3 = a3 * dt
                n_draws += (m1 > 0.0) + (m2 > 0.0) + (m3 > 0.0)
                k1 = poisson(streams[3 * j], m1)
                k2 = poisson(streams[3 * j + 1], m2)
                k3 = poisson(streams[3 * j + 2], m3)
                if boosted:
                    if r2 > 0.0:
                        da, lam, kn = r2, a2, k2
                    else:
                        da, lam, kn = r3, a3, k3
                    step_ll = step_log_likelihood(da, lam, dt, kn)
                    if check_likelihood:
                        _check_step(da, lam, dt, kn, step_ll)
                    ll += step_ll
                    n_is += 1
                    n_is_jumps += kn
                kf[j] = k1 + k2
                kc[j] = k1 + k3
            for j in range(J):
                if kf[j]:
                    for i, v in changes[j]:
                        zf[i] += kf[j] * v
                if kc[j]:
                    for i, v in changes[j]:
                        zc[i] += kc[j] * v
            if record is not None:
                record(rep, (n + 1) * dt, zf, zc, ll)
        g_fine[r] = _dot(w, zf)
        g_coarse[r] = _dot(w, zc)
        loglik[r] = ll
        is_steps[r] = n_is
        is_jumps[r] = n_is_jumps
        draws[r] = n_draws
    return g_fine, g_coarse, loglik, is_steps, is_jumps, draws


def _check_step(da, lam, dt, k, step_ll):
    # direct pmf ratio, kept independent of the log-space formula
    m_orig, m_new = da * dt, lam * dt
    ratio = (math.exp(-m_orig) * m_orig ** k) / (math.exp(-m_new) * m_new ** k)
    got = math.exp(step_ll)
    if abs(got - ratio) > 1e-12 * abs(ratio):
        raise AssertionError(f"likelihood factor {got!r} != pmf ratio {ratio!r}")


def seed_to_u64(value: int) -> int:
    return value & MASK64
