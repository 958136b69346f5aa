"""Sensor-uplink application layer: technology BER fits, segmented designs,
packet-content scheduling and the capacity bound.

A fusion access point collects packets from L sensor nodes over TDMA/TDD
(L uplink slots plus one downlink slot for broadcast retransmission
requests).  Uplink packets are filled FIFO: retransmission spans for
previously completed blocks first, then fresh data bits.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Union

from scipy.optimize import brentq
from scipy.stats import binom as _binom

from .errors import InvalidParameterError
from .feedback import feedback_bit_width

__all__ = [
    "Technology",
    "ZIGBEE",
    "WIFI",
    "BLUETOOTH",
    "TECHNOLOGIES",
    "ber_curve",
    "required_snr",
    "SegmentedDesign",
    "segment_feasibility",
    "FeasibilityReport",
    "feasible",
    "DataSpan",
    "RetxSpan",
    "FusionPlan",
    "schedule_uplink",
    "serialize_plan",
    "downlink_request_counts",
    "max_sensor_nodes",
]


@dataclass(frozen=True)
class Technology:
    """Radio technology described by its fitted BER curve and packet size.

    ``ber_fit`` holds (coefficient, rate) pairs of a sum-of-exponentials
    fit P_b(snr) = sum(c * exp(-k * snr)); snr is linear.
    """

    name: str
    ber_fit: tuple[tuple[float, float], ...]
    packet_bits: int
    header_bits: int

    def __post_init__(self):
        if any(c <= 0 or k <= 0 for c, k in self.ber_fit):
            raise InvalidParameterError("fit coefficients must be positive")
        if self.packet_bits < 1 or self.header_bits < 0:
            raise InvalidParameterError("bad packet geometry")


# The bluetooth fit carries a duplicated exponential term; it is kept as
# published because the tabulated SNR operating points reproduce only with
# the doubled coefficient (see README).
ZIGBEE = Technology("zigbee", ((1.5203, 9.5611),), 1064, 48)
WIFI = Technology("wifi", ((10.0, 3.4535), (1.1066, 2.0247)), 12192, 192)
BLUETOOTH = Technology("bluetooth", ((0.2436, 0.4997), (0.2436, 0.4997)), 2048, 32)
TECHNOLOGIES = {t.name: t for t in (ZIGBEE, WIFI, BLUETOOTH)}

_FIT_BER_RANGE = (1e-6, 1e-2)


def ber_curve(tech: Technology, snr: float) -> float:
    """Fitted link BER at a linear SNR."""
    return sum(c * math.exp(-k * snr) for c, k in tech.ber_fit)


def required_snr(tech: Technology, target_ber: float) -> float:
    """SNR in dB at which the fitted BER equals the target.

    Valid within the fit range [1e-6, 1e-2]; inverted by bracketed
    root-finding on the monotone curve.
    """
    lo_ber, hi_ber = _FIT_BER_RANGE
    if not lo_ber <= target_ber <= hi_ber:
        raise InvalidParameterError(
            f"target BER {target_ber} outside the fit validity range [{lo_ber}, {hi_ber}]"
        )
    hi = max(math.log(c * len(tech.ber_fit) / (0.1 * lo_ber)) / k for c, k in tech.ber_fit)
    snr = brentq(
        lambda g: ber_curve(tech, g) - target_ber, 1e-12, hi, xtol=1e-14, rtol=1e-15
    )
    return 10.0 * math.log10(snr)


@dataclass(frozen=True)
class SegmentedDesign:
    """Constant-window bitwise retransmission over a segmented packet.

    The packet splits into ``n_seg`` equal segments, each with its own
    window of ``w_seg`` bits and its own subset-rank feedback; the total
    feedback length is derived, n_seg * ceil(log2(C(N/n_seg, w_seg))).
    """

    tech: Technology
    p_f: float
    p_r: float
    n_seg: int
    w_seg: int

    def __post_init__(self):
        if self.tech.packet_bits % self.n_seg != 0:
            raise InvalidParameterError("packet size must divide into equal segments")
        if not 0.0 <= self.p_f < 1.0 or not 0.0 <= self.p_r < 1.0:
            raise InvalidParameterError("link BERs must be in [0, 1)")
        if not 1 <= self.w_seg <= self.segment_bits:
            raise InvalidParameterError("window must fit inside a segment")

    @property
    def segment_bits(self) -> int:
        return self.tech.packet_bits // self.n_seg

    @property
    def c_tot(self) -> int:
        return self.n_seg * feedback_bit_width(self.segment_bits, self.w_seg)

    @property
    def total_window(self) -> int:
        return self.n_seg * self.w_seg


def segment_feasibility(design: SegmentedDesign, per_segment: bool = True) -> tuple[float, float]:
    """(forward, reverse) feasibility probabilities of a segmented design.

    Forward: probability that a segment carries at most w_seg errors (the
    window can then cover them all); with ``per_segment=False`` the joint
    probability over all segments is returned instead.  Reverse:
    probability that at least one of the c_tot feedback bits is hit.
    """
    ppf = float(_binom.cdf(design.w_seg, design.segment_bits, design.p_f))
    if not per_segment:
        ppf = ppf**design.n_seg
    ppr = -math.expm1(design.c_tot * math.log1p(-design.p_r)) if design.p_r > 0 else 0.0
    return ppf, ppr


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    reasons: tuple[str, ...]

    def __bool__(self) -> bool:
        return self.feasible


def feasible(design: SegmentedDesign) -> FeasibilityReport:
    """Screen a design against the deployment requirements.

    Requires the feedback-corruption probability below 1e-3 plus the
    efficient-design guidance of at most 1e-3 forward and 1e-5 reverse
    link BER.
    """
    _, ppr = segment_feasibility(design)
    reasons = []
    if ppr >= 1e-3:
        reasons.append(f"feedback corruption probability {ppr:.2e} >= 1e-3")
    if design.p_f > 1e-3:
        reasons.append(f"forward BER {design.p_f:.1e} > 1e-3")
    if design.p_r > 1e-5:
        reasons.append(f"reverse BER {design.p_r:.1e} > 1e-5")
    return FeasibilityReport(not reasons, tuple(reasons))


# ---------------------------------------------------------------------------
# uplink packet scheduling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DataSpan:
    """``bits`` fresh data bits of information block ``block`` (1-based)."""

    block: int
    bits: int


@dataclass(frozen=True)
class RetxSpan:
    """``bits`` retransmitted bits, round ``round`` of block ``block``."""

    block: int
    round: int
    bits: int


Span = Union[DataSpan, RetxSpan]


@dataclass(frozen=True)
class FusionPlan:
    """Ordered uplink packet contents."""

    packet_bits: int
    packets: tuple[tuple[Span, ...], ...]

    @property
    def total_data_bits(self) -> int:
        return sum(s.bits for p in self.packets for s in p if isinstance(s, DataSpan))

    @property
    def total_retx_bits(self) -> int:
        return sum(s.bits for p in self.packets for s in p if isinstance(s, RetxSpan))

    def packet_fill(self, index: int) -> int:
        """Occupied bits of the packet at 0-based ``index``."""
        return sum(s.bits for s in self.packets[index])

    @property
    def trailing_free_bits(self) -> tuple[int, ...]:
        """Unused capacity of each packet, reported rather than refilled."""
        return tuple(self.packet_bits - self.packet_fill(i) for i in range(len(self.packets)))


def schedule_uplink(n: int, w: int, d: int, blocks: int, block_bits: int) -> FusionPlan:
    """FIFO uplink schedule for ``blocks`` buffered information blocks.

    Each packet first carries the retransmission spans due this slot (one
    per previously completed block, d consecutive slots per block, in
    block order), then fills up with fresh data.  Requires the total
    retransmission load d*w to stay well below the packet size for the
    regular packet structure; warns otherwise.
    """
    if n < 1 or w < 1 or d < 0 or blocks < 0 or block_bits < 1:
        raise InvalidParameterError("bad schedule parameters")
    if d and w > n:
        raise InvalidParameterError("window cannot exceed the packet size")
    if d * w > n / 4:
        warnings.warn("d*w exceeds n/4; packet structure may be irregular")
    if blocks == 0:
        return FusionPlan(n, ())

    pending: dict[int, list[tuple[int, int]]] = {}
    remaining = block_bits
    current = 1
    packets: list[tuple[Span, ...]] = []
    p = 1
    while current <= blocks or any(k >= p for k in pending):
        spans: list[Span] = []
        cap = n
        deferred: list[tuple[int, int]] = []
        for block, rnd in pending.pop(p, []):
            if cap >= w:
                spans.append(RetxSpan(block, rnd, w))
                cap -= w
            else:
                deferred.append((block, rnd))
        if deferred:
            pending[p + 1] = deferred + pending.get(p + 1, [])
        while cap > 0 and current <= blocks:
            take = min(cap, remaining)
            spans.append(DataSpan(current, take))
            cap -= take
            remaining -= take
            if remaining == 0:
                for rnd in range(1, d + 1):
                    pending.setdefault(p + rnd, []).append((current, rnd))
                current += 1
                remaining = block_bits
        packets.append(tuple(spans))
        p += 1
    return FusionPlan(n, tuple(packets))


def serialize_plan(plan: FusionPlan) -> str:
    """Line-oriented text form, one packet per line.

    Data spans print as ``D<block>(<bits>)`` and retransmission spans as
    ``R<block>,<round>(<bits>)``, comma separated.
    """
    lines = []
    for packet in plan.packets:
        parts = []
        for span in packet:
            if isinstance(span, DataSpan):
                parts.append(f"D{span.block}({span.bits})")
            else:
                parts.append(f"R{span.block},{span.round}({span.bits})")
        lines.append(", ".join(parts))
    return "\n".join(lines)


def downlink_request_counts(plan: FusionPlan) -> tuple[int, ...]:
    """Number of retransmission requests served by each uplink packet."""
    return tuple(
        sum(1 for s in packet if isinstance(s, RetxSpan)) for packet in plan.packets
    )


def max_sensor_nodes(n: int, overhead_bits: int, d: int, c_tot: int) -> int:
    """Largest node count whose combined feedback fits one downlink slot.

    floor((n - overhead) / (d * c_tot)): the floor guarantees the fit (the
    nearest-integer reading can overshoot the slot by half a message).
    """
    if d * c_tot <= 0:
        raise InvalidParameterError("need d >= 1 and c_tot >= 1")
    if n <= overhead_bits:
        raise InvalidParameterError("no payload left after overhead")
    return (n - overhead_bits) // (d * c_tot)
