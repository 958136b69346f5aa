"""Feedback-message codecs and error-tolerance analysis.

Two codecs report the retransmission set to the sender:

* combinadic: the W-subset of bit positions is ranked in colexicographic
  order and the rank is sent verbatim in ceil(log2(C(N, W))) bits.
* synchronized-permutation: sender and receiver step an identical
  pseudo-random permutation stream, advancing 2**C1 permutations per
  symbol period.  The receiver searches for a permutation that maps the
  target positions into the first W slots and reports only the stream
  index modulo 2**C1; the idle-period count carries the rest implicitly.

The permutation stream is counter based (keyed by the session seed), so
the sender can jump straight to any stream index without replaying.

Wire format: messages are bit-packed big endian, most significant bit
first, exactly C (or C1) bits wide, zero-padded at the tail of the last
byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from .errors import InvalidParameterError, SearchExhaustedError
from .model import round_half_away

__all__ = [
    "CombinadicMessage",
    "PermutationMessage",
    "FeedbackMessage",
    "feedback_bit_width",
    "combinadic_encode",
    "combinadic_decode",
    "pack_bits",
    "unpack_bits",
    "permutation_at",
    "permutation_search",
    "permutation_recover",
    "simulate_permutation_search",
    "expected_idle_periods",
    "mean_report_delay",
    "optimal_c1",
    "optimal_c1_from_mean",
    "throughput_one_retx",
    "feedback_error_tolerance",
]


@dataclass(frozen=True)
class CombinadicMessage:
    """Subset rank plus its exact wire width in bits."""

    rank: int
    bit_width: int

    def __post_init__(self):
        if self.rank < 0:
            raise InvalidParameterError("rank must be non-negative")

    def to_bytes(self) -> bytes:
        return pack_bits(self.rank, self.bit_width)


@dataclass(frozen=True)
class PermutationMessage:
    """Residual stream index (C1 bits on the wire) plus idle-period count.

    The idle periods are conveyed by timing, not by payload bits.
    """

    residual: int
    idle_periods: int
    bit_width: int

    def __post_init__(self):
        if not 0 <= self.residual < (1 << self.bit_width):
            raise InvalidParameterError("residual must fit in bit_width bits")
        if self.idle_periods < 0:
            raise InvalidParameterError("idle_periods must be non-negative")

    @property
    def stream_index(self) -> int:
        """1-based index of the matching permutation in the shared stream."""
        return (self.idle_periods << self.bit_width) + self.residual

    def to_bytes(self) -> bytes:
        return pack_bits(self.residual, self.bit_width)


FeedbackMessage = Union[CombinadicMessage, PermutationMessage]


# ---------------------------------------------------------------------------
# bit packing
# ---------------------------------------------------------------------------


def pack_bits(value: int, width: int) -> bytes:
    """Big-endian bit packing of ``value`` into exactly ``width`` bits."""
    if width < 0:
        raise InvalidParameterError("width must be non-negative")
    if value < 0 or (width < value.bit_length()):
        raise InvalidParameterError("value does not fit in the given width")
    nbytes = (width + 7) // 8
    return (value << (8 * nbytes - width)).to_bytes(nbytes, "big")


def unpack_bits(data: bytes, width: int) -> int:
    if len(data) != (width + 7) // 8:
        raise InvalidParameterError("payload length does not match the width")
    return int.from_bytes(data, "big") >> (8 * len(data) - width)


# ---------------------------------------------------------------------------
# combinadic codec
# ---------------------------------------------------------------------------


def feedback_bit_width(n: int, w: int) -> int:
    """Exact width of a subset-rank message: ceil(log2(C(n, w)))."""
    total = math.comb(n, w)
    return (total - 1).bit_length()


def _check_positions(positions: Iterable[int], n: int) -> tuple[int, ...]:
    pos = tuple(sorted(int(p) for p in positions))
    if len(pos) == 0:
        raise InvalidParameterError("need at least one position")
    if len(set(pos)) != len(pos):
        raise InvalidParameterError("positions must be distinct")
    if pos[0] < 0 or pos[-1] >= n:
        raise InvalidParameterError("positions must lie in [0, n)")
    return pos


def combinadic_encode(positions: Iterable[int], n: int) -> CombinadicMessage:
    """Rank a sorted set of 0-based positions in colexicographic order."""
    pos = _check_positions(positions, n)
    rank = sum(math.comb(p, i + 1) for i, p in enumerate(pos))
    return CombinadicMessage(rank, feedback_bit_width(n, len(pos)))


def combinadic_decode(message: CombinadicMessage, n: int, w: int) -> tuple[int, ...]:
    """Invert :func:`combinadic_encode`; returns sorted 0-based positions."""
    total = math.comb(n, w)
    if message.rank >= total:
        raise InvalidParameterError(f"rank {message.rank} >= C({n}, {w}) = {total}")
    rank = message.rank
    out = []
    c = n - 1
    for i in range(w, 0, -1):
        while math.comb(c, i) > rank:
            c -= 1
        out.append(c)
        rank -= math.comb(c, i)
        c -= 1
    return tuple(reversed(out))


# ---------------------------------------------------------------------------
# synchronized permutation stream
# ---------------------------------------------------------------------------

_WORDS_PER_COUNTER = 4


def _blocks_per_permutation(n: int) -> int:
    return -(-n // _WORDS_PER_COUNTER)


def _stream_generator(seed: int, start_index: int, n: int) -> np.random.Generator:
    counter = start_index * _blocks_per_permutation(n)
    return np.random.Generator(np.random.Philox(key=seed, counter=[counter, 0, 0, 0]))


def permutation_at(seed: int, index: int, n: int) -> np.ndarray:
    """The ``index``-th (0-based) permutation of 0..n-1 in the shared stream.

    Counter-based: any index is reachable directly, and sequential chunked
    generation yields identical permutations.
    """
    g = _stream_generator(seed, index, n)
    u = g.random(_blocks_per_permutation(n) * _WORDS_PER_COUNTER)[:n]
    return np.argsort(u)


def permutation_search(
    unreliable_positions: Iterable[int],
    n: int,
    w: int,
    c1: int,
    rng_seed: int,
    max_tries: int | None = None,
    chunk: int = 512,
) -> PermutationMessage:
    """Find the first stream permutation mapping the targets into the
    leading w slots and encode its index as (idle periods, residual).

    The stream index K is 1-based; on average C(n, w) permutations are
    searched.  All w target positions must land inside the window.
    """
    targets = _check_positions(unreliable_positions, n)
    if len(targets) != w:
        raise InvalidParameterError("the target set must contain exactly w positions")
    if not 1 <= w <= n:
        raise InvalidParameterError("need 1 <= w <= n")
    if c1 < 1:
        raise InvalidParameterError("c1 must be positive")
    if max_tries is None:
        max_tries = 10**6 * math.comb(n, w)

    words = _blocks_per_permutation(n) * _WORDS_PER_COUNTER
    t_idx = np.asarray(targets)
    base = 0
    while base < max_tries:
        count = min(chunk, max_tries - base)
        g = _stream_generator(rng_seed, base, n)
        u = g.random(count * words).reshape(count, words)[:, :n]
        kth = np.partition(u, w - 1, axis=1)[:, w - 1]
        hits = np.nonzero(u[:, t_idx].max(axis=1) <= kth)[0]
        if hits.size:
            k = base + int(hits[0]) + 1  # 1-based stream index
            return PermutationMessage(k % (1 << c1), k >> c1, c1)
        base += count
    raise SearchExhaustedError("no qualifying permutation found", max_tries)


def permutation_recover(
    message: PermutationMessage, n: int, w: int, rng_seed: int
) -> tuple[int, ...]:
    """Sender side: regenerate the reported permutation and read the window."""
    perm = permutation_at(rng_seed, message.stream_index - 1, n)
    return tuple(sorted(int(p) for p in perm[:w]))


def simulate_permutation_search(
    n: int, w: int, c1: int, trials: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Search statistics over random target sets (exchangeable reliabilities).

    Returns the per-trial stream indexes K and idle-period counts I.
    """
    picker = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    session_seeds = picker.integers(0, 2**63, size=trials)
    ks = np.empty(trials, dtype=np.int64)
    for t in range(trials):
        targets = picker.choice(n, size=w, replace=False)
        msg = permutation_search(targets, n, w, c1, int(session_seeds[t]))
        ks[t] = msg.stream_index
    return ks, ks >> c1


# ---------------------------------------------------------------------------
# delay and throughput models
# ---------------------------------------------------------------------------


def expected_idle_periods(n: int, w: int, c1: int) -> float:
    """E[idle periods] for a geometric search checked 2**c1 per period.

    K is geometric with success probability 1/C(n, w); the idle count is
    floor(K / 2**c1).
    """
    p = 1.0 / math.comb(n, w)
    m = float(1 << c1)
    log_q = math.log1p(-p)
    qm = math.exp(m * log_q)
    return math.exp((m - 1.0) * log_q) / (1.0 - qm)


def mean_report_delay(n: int, w: int, c1: int) -> float:
    """Expected symbol periods from search start to retransmission start:
    idle periods, one reporting period, and the c1 feedback bit periods."""
    return expected_idle_periods(n, w, c1) + 1.0 + c1


def optimal_c1(n: int, w: int) -> int:
    """Residual width minimizing the expected report delay."""
    return optimal_c1_from_mean(math.comb(n, w))


def optimal_c1_from_mean(mean_k: float) -> int:
    """round(-0.5 + log2(E[K])), at least 1."""
    if mean_k <= 0:
        raise InvalidParameterError("mean_k must be positive")
    return max(1, round_half_away(-0.5 + math.log2(mean_k)))


def throughput_one_retx(n: int, mean_idle_plus_one: float) -> float:
    """Forward throughput with one retransmission: n / E[delay periods]."""
    if mean_idle_plus_one <= 0:
        raise InvalidParameterError("the mean delay must be positive")
    return n / mean_idle_plus_one


def feedback_error_tolerance(c_bits: int, p_min: float = 0.999) -> float:
    """Largest per-bit feedback error probability keeping a C-bit message
    intact with probability at least p_min: 1 - p_min**(1/C)."""
    if c_bits < 1:
        raise InvalidParameterError("c_bits must be positive")
    if not 0.0 < p_min < 1.0:
        raise InvalidParameterError("p_min must be in (0, 1)")
    return -math.expm1(math.log(p_min) / c_bits)
