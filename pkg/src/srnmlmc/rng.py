"""Counter-based random streams and exact Poisson variates.

Every stream is addressed by a :class:`StreamKey` ``(seed, level, replicate,
substream)``. The key is hashed to a 64-bit stream id, and the n-th output of
the stream is ``mix64(id + n * GOLDEN)`` (a SplitMix64 sequence started at the
hashed id), so any stream can be regenerated in isolation and in any order.

Substream numbering used by the kernels:

* coupled tau-leap pairs: ``3 * j + slot`` for reaction ``j`` and split slot
  ``0`` (shared minimum), ``1`` (fine residual), ``2`` (coarse residual);
* single tau-leap paths: ``TAU_LEAP_SUBSTREAM + j``;
* exact SSA paths: ``SSA_SUBSTREAM``.

The compiled core implements the same arithmetic operation by operation, so
both backends produce identical variates for identical keys.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
KEY_INIT = 0x6A09E667F3BCC908
UNIT_52 = 2.220446049250313e-16  # 2**-52

TAU_LEAP_SUBSTREAM = 1 << 32
SSA_SUBSTREAM = 1 << 33

INVERSION_THRESHOLD = 10.0
INVERSION_MAX_K = 400

HALF_LOG_2PI = 0.9189385332046728
# log(k!) for k = 0..30, correctly rounded
LOG_FACTORIAL_TABLE = (
    0.0, 0.0, 0.6931471805599453, 1.791759469228055, 3.1780538303479458,
    4.787491742782046, 6.579251212010101, 8.525161361065415, 10.60460290274525,
    12.801827480081469, 15.104412573075516, 17.502307845873887, 19.987214495661885,
    22.552163853123425, 25.19122118273868, 27.89927138384089, 30.671860106080672,
    33.50507345013689, 36.39544520803305, 39.339884187199495, 42.335616460753485,
    45.38013889847691, 48.47118135183523, 51.60667556776438, 54.78472939811232,
    58.00360522298052, 61.261701761002, 64.55753862700634, 67.88974313718154,
    71.25703896716801, 74.65823634883016,
)


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _absorb(h: int, value: int) -> int:
    return mix64(((h ^ (value & MASK64)) + GOLDEN) & MASK64)


def stream_id(seed: int, level: int, replicate: int, substream: int) -> int:
    h = _absorb(KEY_INIT, seed)
    h = _absorb(h, level)
    h = _absorb(h, replicate)
    return _absorb(h, substream)


@dataclass(frozen=True)
class StreamKey:
    seed: int
    level: int
    replicate: int
    substream: int

    @property
    def id(self) -> int:
        return stream_id(self.seed, self.level, self.replicate, self.substream)


class Stream:
    """Sequential view of one counter-based stream."""

    __slots__ = ("key", "counter")

    def __init__(self, key: int, counter: int = 0):
        self.key = key & MASK64
        self.counter = counter

    def next_u64(self) -> int:
        self.counter += 1
        return mix64((self.key + self.counter * GOLDEN) & MASK64)

    def uniform(self) -> float:
        """Uniform on the open interval (0, 1) with 52-bit resolution."""
        return ((self.next_u64() >> 12) + 0.5) * UNIT_52


def derive_stream(key: StreamKey) -> Stream:
    return Stream(key.id)


def log_factorial(k: int) -> float:
    if k <= 30:
        return LOG_FACTORIAL_TABLE[k]
    n = float(k + 1)
    inv = 1.0 / n
    inv2 = inv * inv
    series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
    return (n - 0.5) * math.log(n) - n + HALF_LOG_2PI + series


def _poisson_inversion(stream: Stream, mean: float) -> int:
    u = stream.uniform()
    k = 0
    p = math.exp(-mean)
    cdf = p
    while u > cdf and k < INVERSION_MAX_K:
        k += 1
        p = p * mean / k
        cdf = cdf + p
    return k


def _poisson_ptrs(stream: Stream, mean: float) -> int:
    # Hormann's transformed rejection with squeeze (exact for mean >= 10)
    slam = math.sqrt(mean)
    loglam = math.log(mean)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        U = stream.uniform() - 0.5
        V = stream.uniform()
        us = 0.5 - abs(U)
        k = math.floor((2.0 * a / us + b) * U + mean + 0.43)
        if us >= 0.07 and V <= vr:
            return k
        if k < 0 or (us < 0.013 and V > us):
            continue
        if math.log(V) + math.log(invalpha) - math.log(a / (us * us) + b) <= -mean + k * loglam - log_factorial(k):
            return k


def poisson(stream: Stream, mean: float) -> int:
    """Exact Poisson(mean) variate; ``mean == 0`` consumes no randomness."""
    if not (mean >= 0.0) or math.isinf(mean):
        raise ValueError(f"Poisson mean must be finite and non-negative, got {mean!r}")
    if mean == 0.0:
        return 0
    if mean < INVERSION_THRESHOLD:
        return _poisson_inversion(stream, mean)
    return _poisson_ptrs(stream, mean)
