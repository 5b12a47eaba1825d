# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled path kernels.

Operation-for-operation mirror of ``_pykernels``; see that module for the
semantics of each entry point. The batch loops run without the GIL so callers
may fan replicate ranges out over threads.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, floor, fabs, pow
from libc.stdint cimport uint64_t, int64_t
from libc.stdlib cimport malloc, free

cnp.import_array()

BACKEND = "compiled"

cdef uint64_t MASK_GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t KEY_INIT = 0x6A09E667F3BCC908ULL
cdef uint64_t TAU_LEAP_SUBSTREAM = 4294967296ULL
cdef uint64_t SSA_SUBSTREAM = 8589934592ULL
cdef double UNIT_52 = 2.220446049250313e-16
cdef double INVERSION_THRESHOLD = 10.0
cdef int64_t INVERSION_MAX_K = 400
cdef double HALF_LOG_2PI = 0.9189385332046728

cdef double[31] LOG_FACTORIAL_TABLE
_table = (
    0.0, 0.0, 0.6931471805599453, 1.791759469228055, 3.1780538303479458,
    4.787491742782046, 6.579251212010101, 8.525161361065415, 10.60460290274525,
    12.801827480081469, 15.104412573075516, 17.502307845873887, 19.987214495661885,
    22.552163853123425, 25.19122118273868, 27.89927138384089, 30.671860106080672,
    33.50507345013689, 36.39544520803305, 39.339884187199495, 42.335616460753485,
    45.38013889847691, 48.47118135183523, 51.60667556776438, 54.78472939811232,
    58.00360522298052, 61.261701761002, 64.55753862700634, 67.88974313718154,
    71.25703896716801, 74.65823634883016,
)
for _i in range(31):
    LOG_FACTORIAL_TABLE[_i] = _table[_i]


ctypedef struct Stream:
    uint64_t key
    uint64_t counter


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t absorb(uint64_t h, uint64_t v) noexcept nogil:
    return mix64((h ^ v) + MASK_GOLDEN)


cdef inline uint64_t c_stream_id(uint64_t seed, uint64_t level, uint64_t rep, uint64_t sub) noexcept nogil:
    cdef uint64_t h = absorb(KEY_INIT, seed)
    h = absorb(h, level)
    h = absorb(h, rep)
    return absorb(h, sub)


cdef inline double next_uniform(Stream* s) noexcept nogil:
    s.counter += 1
    cdef uint64_t x = mix64(s.key + s.counter * MASK_GOLDEN)
    return (<double>(x >> 12) + 0.5) * UNIT_52


cdef inline double log_factorial(int64_t k) noexcept nogil:
    cdef double n, inv, inv2, series
    if k <= 30:
        return LOG_FACTORIAL_TABLE[k]
    n = <double>(k + 1)
    inv = 1.0 / n
    inv2 = inv * inv
    series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
    return (n - 0.5) * log(n) - n + HALF_LOG_2PI + series


cdef inline int64_t poisson_inversion(Stream* s, double mean) noexcept nogil:
    cdef double u = next_uniform(s)
    cdef int64_t k = 0
    cdef double p = exp(-mean)
    cdef double cdf = p
    while u > cdf and k < INVERSION_MAX_K:
        k += 1
        p = p * mean / <double>k
        cdf = cdf + p
    return k


cdef inline int64_t poisson_ptrs(Stream* s, double mean) noexcept nogil:
    cdef double slam = sqrt(mean)
    cdef double loglam = log(mean)
    cdef double b = 0.931 + 2.53 * slam
    cdef double a = -0.059 + 0.02483 * b
    cdef double invalpha = 1.1239 + 1.1328 / (b - 3.4)
    cdef double vr = 0.9277 - 3.6224 / (b - 2.0)
    cdef double U, V, us
    cdef int64_t k
    while True:
        U = next_uniform(s) - 0.5
        V = next_uniform(s)
        us = 0.5 - fabs(U)
        k = <int64_t>floor((2.0 * a / us + b) * U + mean + 0.43)
        if us >= 0.07 and V <= vr:
            return k
        if k < 0 or (us < 0.013 and V > us):
            continue
        if log(V) + log(invalpha) - log(a / (us * us) + b) <= -mean + <double>k * loglam - log_factorial(k):
            return k


cdef inline int64_t poisson(Stream* s, double mean) noexcept nogil:
    # callers guarantee 0 <= mean < inf
    if mean == 0.0:
        return 0
    if mean < INVERSION_THRESHOLD:
        return poisson_inversion(s, mean)
    return poisson_ptrs(s, mean)


cdef inline void props(const double[::1] rates, const int64_t[:, ::1] order,
                       const int64_t* x, double* out, Py_ssize_t J, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t j, i
    cdef int64_t o, m, xi
    cdef double a
    # only consumed species gate a reaction; a negative bystander count does not
    for j in range(J):
        a = rates[j]
        for i in range(d):
            o = order[j, i]
            if o == 0:
                continue
            xi = x[i]
            if xi < o:
                a = 0.0
                break
            for m in range(o):
                a *= <double>(xi - m)
        out[j] = a


cdef inline double dot(const double[::1] w, const int64_t* x, Py_ssize_t d) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(d):
        s += w[i] * <double>x[i]
    return s


cdef inline double c_step_log_likelihood(double delta_a, double lam, double dt, int64_t k) noexcept nogil:
    return -dt * (delta_a - lam) + <double>k * log(delta_a / lam)


def step_log_likelihood(double delta_a, double lam, double dt, long long k):
    """log of the Poisson pmf ratio pmf(k; delta_a*dt) / pmf(k; lam*dt)."""
    return c_step_log_likelihood(delta_a, lam, dt, k)


def step_log_likelihood_array(delta_a, lam, dt, k):
    cdef cnp.ndarray[double, ndim=1] da_, lam_, dt_
    cdef cnp.ndarray[int64_t, ndim=1] k_
    da_b, lam_b, dt_b, k_b = np.broadcast_arrays(
        np.asarray(delta_a, dtype=np.float64), np.asarray(lam, dtype=np.float64),
        np.asarray(dt, dtype=np.float64), np.asarray(k, dtype=np.int64))
    shape = da_b.shape
    da_ = np.ascontiguousarray(da_b).ravel()
    lam_ = np.ascontiguousarray(lam_b).ravel()
    dt_ = np.ascontiguousarray(dt_b).ravel()
    k_ = np.ascontiguousarray(k_b).ravel()
    cdef Py_ssize_t n = da_.shape[0], i
    out = np.empty(n)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = c_step_log_likelihood(da_[i], lam_[i], dt_[i], k_[i])
    return out.reshape(shape)


def uniform_stream(seed, level, replicate, substream, Py_ssize_t n):
    cdef Stream s
    s.key = c_stream_id(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF), <uint64_t>(level & 0xFFFFFFFFFFFFFFFF),
                        <uint64_t>(replicate & 0xFFFFFFFFFFFFFFFF), <uint64_t>(substream & 0xFFFFFFFFFFFFFFFF))
    s.counter = 0
    out = np.empty(n)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            o[i] = next_uniform(&s)
    return out


def poisson_stream(seed, level, replicate, substream, double mean, Py_ssize_t n):
    if not (mean >= 0.0) or mean == float("inf"):
        raise ValueError(f"Poisson mean must be finite and non-negative, got {mean!r}")
    cdef Stream s
    s.key = c_stream_id(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF), <uint64_t>(level & 0xFFFFFFFFFFFFFFFF),
                        <uint64_t>(replicate & 0xFFFFFFFFFFFFFFFF), <uint64_t>(substream & 0xFFFFFFFFFFFFFFFF))
    s.counter = 0
    out = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            o[i] = poisson(&s, mean)
    return out


def stream_id(seed, level, replicate, substream):
    return c_stream_id(<uint64_t>(seed & 0xFFFFFFFFFFFFFFFF), <uint64_t>(level & 0xFFFFFFFFFFFFFFFF),
                       <uint64_t>(replicate & 0xFFFFFFFFFFFFFFFF), <uint64_t>(substream & 0xFFFFFFFFFFFFFFFF))


def ssa_batch(stoich, order, rates, x0, double T, seed, level, rep_start, Py_ssize_t count):
    cdef const int64_t[:, ::1] nu = np.ascontiguousarray(stoich, dtype=np.int64)
    cdef const int64_t[:, ::1] alpha = np.ascontiguousarray(order, dtype=np.int64)
    cdef const double[::1] theta = np.ascontiguousarray(rates, dtype=np.float64)
    cdef const int64_t[::1] init = np.ascontiguousarray(x0, dtype=np.int64)
    cdef Py_ssize_t J = nu.shape[0], d = nu.shape[1]
    states = np.empty((count, d), dtype=np.int64)
    jumps = np.zeros(count, dtype=np.int64)
    cdef int64_t[:, ::1] st = states
    cdef int64_t[::1] jp = jumps
    cdef uint64_t useed = <uint64_t>(seed & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t ulevel = <uint64_t>(level & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t urep0 = <uint64_t>(rep_start & 0xFFFFFFFFFFFFFFFF)
    cdef int64_t* x = <int64_t*>malloc(d * sizeof(int64_t))
    cdef double* a = <double*>malloc(J * sizeof(double))
    cdef Py_ssize_t r, i, j, chosen
    cdef Stream s
    cdef double t, a0, tau, target, cum
    cdef int64_t n_jumps
    if x == NULL or a == NULL:
        free(x); free(a)
        raise MemoryError()
    try:
        with nogil:
            for r in range(count):
                s.key = c_stream_id(useed, ulevel, urep0 + <uint64_t>r, SSA_SUBSTREAM)
                s.counter = 0
                for i in range(d):
                    x[i] = init[i]
                t = 0.0
                n_jumps = 0
                while True:
                    props(theta, alpha, x, a, J, d)
                    a0 = 0.0
                    for j in range(J):
                        a0 += a[j]
                    if a0 <= 0.0:
                        break
                    tau = -log(next_uniform(&s)) / a0
                    if t + tau > T:
                        break
                    t += tau
                    target = next_uniform(&s) * a0
                    cum = 0.0
                    chosen = -1
                    for j in range(J):
                        if a[j] > 0.0:
                            chosen = j
                            cum += a[j]
                            if target < cum:
                                break
                    for i in range(d):
                        x[i] += nu[chosen, i]
                    n_jumps += 1
                for i in range(d):
                    st[r, i] = x[i]
                jp[r] = n_jumps
    finally:
        free(x)
        free(a)
    return states, jumps


def tau_leap_batch(stoich, order, rates, x0, double dt, Py_ssize_t n_steps, seed, level,
                   rep_start, Py_ssize_t count):
    cdef const int64_t[:, ::1] nu = np.ascontiguousarray(stoich, dtype=np.int64)
    cdef const int64_t[:, ::1] alpha = np.ascontiguousarray(order, dtype=np.int64)
    cdef const double[::1] theta = np.ascontiguousarray(rates, dtype=np.float64)
    cdef const int64_t[::1] init = np.ascontiguousarray(x0, dtype=np.int64)
    cdef Py_ssize_t J = nu.shape[0], d = nu.shape[1]
    states = np.empty((count, d), dtype=np.int64)
    draws = np.zeros(count, dtype=np.int64)
    cdef int64_t[:, ::1] st = states
    cdef int64_t[::1] dr = draws
    cdef uint64_t useed = <uint64_t>(seed & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t ulevel = <uint64_t>(level & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t urep0 = <uint64_t>(rep_start & 0xFFFFFFFFFFFFFFFF)
    cdef int64_t* z = <int64_t*>malloc(d * sizeof(int64_t))
    cdef int64_t* k = <int64_t*>malloc(J * sizeof(int64_t))
    cdef double* a = <double*>malloc(J * sizeof(double))
    cdef Stream* streams = <Stream*>malloc(J * sizeof(Stream))
    cdef Py_ssize_t r, i, j, n
    cdef int64_t n_draws
    cdef double mean
    if z == NULL or k == NULL or a == NULL or streams == NULL:
        free(z); free(k); free(a); free(streams)
        raise MemoryError()
    try:
        with nogil:
            for r in range(count):
                for j in range(J):
                    streams[j].key = c_stream_id(useed, ulevel, urep0 + <uint64_t>r, TAU_LEAP_SUBSTREAM + <uint64_t>j)
                    streams[j].counter = 0
                for i in range(d):
                    z[i] = init[i]
                n_draws = 0
                for n in range(n_steps):
                    props(theta, alpha, z, a, J, d)
                    for j in range(J):
                        mean = a[j] * dt
                        if mean > 0.0:
                            n_draws += 1
                        k[j] = poisson(&streams[j], mean)
                    for j in range(J):
                        if k[j] != 0:
                            for i in range(d):
                                z[i] += k[j] * nu[j, i]
                for i in range(d):
                    st[r, i] = z[i]
                dr[r] = n_draws
    finally:
        free(z); free(k); free(a); free(streams)
    return states, draws


def coupled_batch(stoich, order, rates, x0, double dt, Py_ssize_t n_steps, seed, level,
                  rep_start, Py_ssize_t count, double delta, weights, sensitive):
    cdef const int64_t[:, ::1] nu = np.ascontiguousarray(stoich, dtype=np.int64)
    cdef const int64_t[:, ::1] alpha = np.ascontiguousarray(order, dtype=np.int64)
    cdef const double[::1] theta = np.ascontiguousarray(rates, dtype=np.float64)
    cdef const int64_t[::1] init = np.ascontiguousarray(x0, dtype=np.int64)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const unsigned char[::1] sens = np.ascontiguousarray(sensitive, dtype=np.uint8)
    cdef Py_ssize_t J = nu.shape[0], d = nu.shape[1]
    g_fine = np.empty(count)
    g_coarse = np.empty(count)
    loglik = np.zeros(count)
    is_steps = np.zeros(count, dtype=np.int64)
    is_jumps = np.zeros(count, dtype=np.int64)
    draws = np.zeros(count, dtype=np.int64)
    cdef double[::1] gf_out = g_fine, gc_out = g_coarse, ll_out = loglik
    cdef int64_t[::1] st_out = is_steps, sj_out = is_jumps, dr_out = draws
    cdef uint64_t useed = <uint64_t>(seed & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t ulevel = <uint64_t>(level & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t urep0 = <uint64_t>(rep_start & 0xFFFFFFFFFFFFFFFF)
    cdef bint use_is = delta > 0.0
    cdef double c = pow(dt, -delta) if use_is else 1.0
    cdef int64_t* zf = <int64_t*>malloc(d * sizeof(int64_t))
    cdef int64_t* zc = <int64_t*>malloc(d * sizeof(int64_t))
    cdef int64_t* kf = <int64_t*>malloc(J * sizeof(int64_t))
    cdef int64_t* kc = <int64_t*>malloc(J * sizeof(int64_t))
    cdef double* af = <double*>malloc(J * sizeof(double))
    cdef double* ac = <double*>malloc(J * sizeof(double))
    cdef Stream* streams = <Stream*>malloc(3 * J * sizeof(Stream))
    cdef Py_ssize_t r, i, j, n
    cdef double a_f, a_c, a1, r2, r3, a2, a3, m1, m2, m3, ll, da, lam
    cdef int64_t k1, k2, k3, kn, n_is, n_is_jumps, n_draws
    cdef bint same_g, boosted
    if (zf == NULL or zc == NULL or kf == NULL or kc == NULL or af == NULL
            or ac == NULL or streams == NULL):
        free(zf); free(zc); free(kf); free(kc); free(af); free(ac); free(streams)
        raise MemoryError()
    try:
        with nogil:
            for r in range(count):
                for j in range(3 * J):
                    streams[j].key = c_stream_id(useed, ulevel, urep0 + <uint64_t>r, <uint64_t>j)
                    streams[j].counter = 0
                for i in range(d):
                    zf[i] = init[i]
                    zc[i] = init[i]
                ll = 0.0
                n_is = 0
                n_is_jumps = 0
                n_draws = 0
                for n in range(n_steps):
                    if n % 2 == 0:
                        props(theta, alpha, zc, ac, J, d)
                    props(theta, alpha, zf, af, J, d)
                    same_g = use_is and dot(w, zf, d) == dot(w, zc, d)
                    for j in range(J):
                        a_f = af[j]
                        a_c = ac[j]
                        a1 = a_f if a_f < a_c else a_c
                        r2 = a_f - a1
                        r3 = a_c - a1
                        boosted = same_g and sens[j] != 0 and a_f != a_c
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
                        k1 = poisson(&streams[3 * j], m1)
                        k2 = poisson(&streams[3 * j + 1], m2)
                        k3 = poisson(&streams[3 * j + 2], m3)
                        if boosted:
                            if r2 > 0.0:
                                da = r2
                                lam = a2
                                kn = k2
                            else:
                                da = r3
                                lam = a3
                                kn = k3
                            ll += c_step_log_likelihood(da, lam, dt, kn)
                            n_is += 1
                            n_is_jumps += kn
                        kf[j] = k1 + k2
                        kc[j] = k1 + k3
                    for j in range(J):
                        if kf[j] != 0:
                            for i in range(d):
                                zf[i] += kf[j] * nu[j, i]
                        if kc[j] != 0:
                            for i in range(d):
                                zc[i] += kc[j] * nu[j, i]
                gf_out[r] = dot(w, zf, d)
                gc_out[r] = dot(w, zc, d)
                ll_out[r] = ll
                st_out[r] = n_is
                sj_out[r] = n_is_jumps
                dr_out[r] = n_draws
    finally:
        free(zf); free(zc); free(kf); free(kc); free(af); free(ac); free(streams)
    return g_fine, g_coarse, loglik, is_steps, is_jumps, draws
