"""Domain types and rate/window arithmetic for bitwise selective retransmission.

Conventions used throughout the package:

* SNR values are linear (dB conversion happens only at the CLI boundary).
* The channel gain is normalized to 1, so the matched-filter noise has
  variance ``noise_density / 2``.  With the default ``noise_density = 2``
  the received samples live directly in the normalized-reliability space:
  a transmitted symbol arrives as ``N(+-sqrt(2*snr), 1)``.
* Reliability thresholds are expressed in that normalized space, i.e. they
  are compared directly against ``|sample| / sigma_w`` (equivalently, the
  threshold axis of the fixed-threshold sweeps, U / sqrt(Eb)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

from .errors import InvalidParameterError

__all__ = [
    "SlowChiSquareFading",
    "LinkModel",
    "FixedRate",
    "FixedWindow",
    "FixedThreshold",
    "Strategy",
    "ProtocolConfig",
    "SoftBit",
    "forward_rate",
    "reverse_rate",
    "fixed_rate_window",
    "effective_snr_per_bit",
    "round_half_away",
]


def round_half_away(x: float) -> int:
    """Round to nearest integer, halves away from zero.

    Applied globally wherever a design formula asks for "round" so that
    table reproductions are deterministic.
    """
    if x >= 0:
        return math.floor(x + 0.5)
    return math.ceil(x - 0.5)


@dataclass(frozen=True)
class SlowChiSquareFading:
    """Slow chi-square (exponential-power) fading with the given mean SNR.

    The SNR is constant over a packet and all of its retransmissions and is
    drawn from ``p(g) = exp(-g/mean_snr) / mean_snr``.
    """

    mean_snr: float

    def __post_init__(self):
        if not self.mean_snr > 0:
            raise InvalidParameterError("fading mean_snr must be positive")


@dataclass(frozen=True)
class LinkModel:
    """Binary antipodal AWGN link.

    Attributes:
        snr_per_symbol: linear SNR per transmitted binary symbol,
            ``symbol_energy / noise_density``.
        noise_density: one-sided noise spectral density N0.  The default of
            2.0 puts received samples in the normalized-reliability space
            (unit noise standard deviation).
        symbol_energy: energy per binary symbol; derived from the SNR when
            not given explicitly.
        fading: optional slow chi-square fading descriptor.
    """

    snr_per_symbol: float
    noise_density: float = 2.0
    symbol_energy: float | None = None
    fading: SlowChiSquareFading | None = None

    def __post_init__(self):
        if not self.snr_per_symbol > 0:
            raise InvalidParameterError("snr_per_symbol must be positive")
        if not self.noise_density > 0:
            raise InvalidParameterError("noise_density must be positive")
        if self.symbol_energy is None:
            object.__setattr__(
                self, "symbol_energy", self.snr_per_symbol * self.noise_density
            )
        else:
            if not self.symbol_energy > 0:
                raise InvalidParameterError("symbol_energy must be positive")
            ratio = self.symbol_energy / self.noise_density
            if abs(ratio - self.snr_per_symbol) > 1e-12 * self.snr_per_symbol:
                raise InvalidParameterError(
                    "snr_per_symbol must equal symbol_energy / noise_density"
                )

    @classmethod
    def from_snr(cls, snr: float, fading: SlowChiSquareFading | None = None) -> "LinkModel":
        return cls(snr_per_symbol=snr, fading=fading)

    @property
    def noise_std(self) -> float:
        """Standard deviation of the matched-filter noise, sqrt(N0/2)."""
        return math.sqrt(self.noise_density / 2.0)

    def with_snr(self, snr: float) -> "LinkModel":
        """Same link at a different SNR (energy rescaled, N0 kept)."""
        return LinkModel(
            snr_per_symbol=snr, noise_density=self.noise_density, fading=self.fading
        )


@dataclass(frozen=True)
class FixedRate:
    """Constant forward rate; window size derived from it."""

    target_rate: float


@dataclass(frozen=True)
class FixedWindow:
    """Constant retransmission window, given as the fraction W/N."""

    window_fraction: float


@dataclass(frozen=True)
class FixedThreshold:
    """Single constant reliability threshold shared by every round."""

    threshold: float


Strategy = Union[FixedRate, FixedWindow, FixedThreshold]


@dataclass(frozen=True)
class ProtocolConfig:
    """Static parameters of a bitwise retransmission protocol.

    ``thresholds`` holds the per-round decision thresholds U_0..U_{D-1}
    (normalized reliability units, nondecreasing; the lower bound of every
    reliability band is zero and is not stored).  ``windows`` holds the
    per-round retransmission window sizes W_1..W_D and ``feedback_bits``
    the per-round feedback message lengths C_1..C_D.  Fields that a given
    strategy does not need may be left unset.
    """

    packet_bits: int
    retransmissions: int
    strategy: Strategy | None = None
    thresholds: tuple[float, ...] | None = None
    windows: tuple[int, ...] | None = None
    feedback_bits: tuple[int, ...] | None = None

    def __post_init__(self):
        n, d = self.packet_bits, self.retransmissions
        if n < 1:
            raise InvalidParameterError("packet_bits must be positive")
        if d < 0:
            raise InvalidParameterError("retransmissions must be non-negative")
        if self.thresholds is not None:
            object.__setattr__(self, "thresholds", tuple(float(u) for u in self.thresholds))
            if len(self.thresholds) != d:
                raise InvalidParameterError("need one threshold per retransmission")
            if any(u < 0 for u in self.thresholds):
                raise InvalidParameterError("thresholds must be non-negative")
            if any(a > b for a, b in zip(self.thresholds, self.thresholds[1:])):
                raise InvalidParameterError("thresholds must be nondecreasing")
        if self.windows is not None:
            object.__setattr__(self, "windows", tuple(int(w) for w in self.windows))
            if len(self.windows) != d:
                raise InvalidParameterError("need one window size per retransmission")
            if any(not 1 <= w <= n for w in self.windows):
                raise InvalidParameterError("window sizes must satisfy 1 <= W_d <= N")
        if self.feedback_bits is not None:
            object.__setattr__(self, "feedback_bits", tuple(int(c) for c in self.feedback_bits))
            if len(self.feedback_bits) != d:
                raise InvalidParameterError("need one feedback size per retransmission")
            if any(c < 1 for c in self.feedback_bits):
                raise InvalidParameterError("feedback sizes must be positive")

    def with_thresholds(self, thresholds) -> "ProtocolConfig":
        return replace(self, thresholds=tuple(thresholds))


@dataclass(frozen=True)
class SoftBit:
    """Soft decision state of one bit after MRC combining.

    ``accumulated_sample`` is the running average of all received copies;
    its magnitude is the bit reliability.  ``transmitted_positive`` records
    the ground-truth symbol for scoring in simulations.
    """

    accumulated_sample: float
    copies: int
    transmitted_positive: bool

    def __post_init__(self):
        if self.copies < 1:
            raise InvalidParameterError("a soft bit holds at least one copy")

    @property
    def reliability(self) -> float:
        return abs(self.accumulated_sample)

    def combine(self, sample: float) -> "SoftBit":
        """Fold one more received copy into the running MRC average."""
        total = self.accumulated_sample * self.copies + sample
        return SoftBit(total / (self.copies + 1), self.copies + 1, self.transmitted_positive)

    @property
    def decided_positive(self) -> bool:
        return self.accumulated_sample > 0


def forward_rate(config: ProtocolConfig) -> float:
    """Fraction of forward-link bits that carry data: N / (N + sum(W_d))."""
    if config.windows is None:
        raise InvalidParameterError("forward_rate needs the window sizes")
    n = config.packet_bits
    return n / (n + sum(config.windows))


def reverse_rate(config: ProtocolConfig) -> float:
    """Fraction of reverse-link traffic: sum(C_d) / (N + sum(C_d))."""
    if config.feedback_bits is None:
        raise InvalidParameterError("reverse_rate needs the feedback sizes")
    total = sum(config.feedback_bits)
    return total / (config.packet_bits + total)


def fixed_rate_window(n: int, d: int, rate: float) -> int:
    """Window size realizing a target forward rate: round((N/D)(1/R - 1)).

    The admissible rates are 1/(1+D) < R <= N/(D+N); outside that interval
    no window in [1, N] exists.
    """
    if n < 1 or d < 1:
        raise InvalidParameterError("need n >= 1 and d >= 1")
    lo, hi = 1.0 / (1.0 + d), n / (d + n)
    if not (rate > lo and rate <= hi * (1.0 + 1e-12)):
        raise InvalidParameterError(
            f"rate {rate} outside the admissible interval ({lo}, {hi}]"
        )
    w = round_half_away((n / d) * (1.0 / rate - 1.0))
    return min(max(w, 1), n)


def effective_snr_per_bit(link: LinkModel, rate: float) -> float:
    """Per-symbol SNR at a fixed energy budget per information bit.

    Scaling by the forward rate equalizes the energy spent per data bit
    across schemes with different amounts of retransmission overhead.
    """
    if not 0 < rate <= 1:
        raise InvalidParameterError("rate must be in (0, 1]")
    return link.snr_per_symbol * rate
