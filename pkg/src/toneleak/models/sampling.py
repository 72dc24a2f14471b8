"""Aliasing arithmetic and discrete sampling primitives.

This module provides the SamplingConfig and DiscreteSignal types, the alias
folding formula, exact point-sampling of a SinusoidSum, and index-anchored
decimation. Aliasing is never injected explicitly: it appears because signals are
evaluated exactly on the sampling grid.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from toneleak.exceptions import InvalidArgumentError
from toneleak.models.dtmf import SinusoidSum

logger = logging.getLogger(__name__)

# Largest tolerated mismatch between the reported and the measured rate
MAX_RATE_MISMATCH = 0.1

# Reported vs measured IMU rates of four phones (Hz)
DEVICE_RATES: dict[str, tuple[float, float]] = {
    "pixel1": (400.00, 401.69),
    "pixel2": (400.00, 409.96),
    "galaxy_s8": (400.00, 429.27),
    "galaxy_s9": (415.97, 413.61),
}


@dataclass(frozen=True)
class SamplingConfig:
    """Sampling rates of a sensor.

    Attributes:
        nominal_rate: Rate the platform reports, in Hz.
        actual_rate: Rate samples are really taken at, in Hz. 0 means "same as
            nominal".
    """

    nominal_rate: float
    actual_rate: float = field(default=0.0)

    def __post_init__(self) -> None:
        if self.nominal_rate <= 0:
            raise InvalidArgumentError(
                f"nominal_rate must be positive, got {self.nominal_rate}"
            )
        if self.actual_rate == 0.0:
            object.__setattr__(self, "actual_rate", float(self.nominal_rate))
        if self.actual_rate <= 0:
            raise InvalidArgumentError(f"actual_rate must be positive, got {self.actual_rate}")

        mismatch = abs(self.actual_rate - self.nominal_rate) / self.nominal_rate
        if mismatch > MAX_RATE_MISMATCH:
            raise InvalidArgumentError(
                f"actual rate {self.actual_rate} Hz deviates {mismatch:.1%} from "
                f"nominal {self.nominal_rate} Hz (max {MAX_RATE_MISMATCH:.0%})"
            )

    @property
    def nyquist(self) -> float:
        """Nyquist frequency of the actual rate."""
        return self.actual_rate / 2.0

    @classmethod
    def for_device(cls, device: str) -> "SamplingConfig":
        """Build the config of a named phone from DEVICE_RATES.

        Raises:
            InvalidArgumentError: If the device is unknown.
        """
        try:
            nominal, actual = DEVICE_RATES[device]
        except KeyError as e:
            raise InvalidArgumentError(
                f"Unknown device {device!r}; choose from {sorted(DEVICE_RATES)}"
            ) from e
        return cls(nominal_rate=nominal, actual_rate=actual)


@dataclass(frozen=True, eq=False)
class DiscreteSignal:
    """A uniformly sampled real signal.

    Attributes:
        samples: 1-D float array of sample values.
        rate: Sampling rate in Hz.
        start_time: Time of samples[0] in seconds.
        base_rate: Rate before any decimation; 0 means "same as rate".
        decimation: Cumulative decimation factor applied since base_rate.
    """

    samples: npt.NDArray[np.float64]
    rate: float
    start_time: float = 0.0
    base_rate: float = 0.0
    decimation: int = 1

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise InvalidArgumentError("samples must be a non-empty 1-D sequence")
        if self.rate <= 0:
            raise InvalidArgumentError(f"rate must be positive, got {self.rate}")
        if self.decimation < 1:
            raise InvalidArgumentError(f"decimation must be >= 1, got {self.decimation}")
        if self.base_rate == 0.0:
            object.__setattr__(self, "base_rate", float(self.rate) * self.decimation)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def times(self) -> npt.NDArray[np.float64]:
        """Sample instants in seconds."""
        return self.start_time + np.arange(len(self)) / self.rate

    def equals(self, other: "DiscreteSignal") -> bool:
        """Exact equality of samples, rate, and start time."""
        return (
            self.rate == other.rate
            and self.start_time == other.start_time
            and np.array_equal(self.samples, other.samples)
        )


def alias_frequency(f: float, f_s: float) -> float:
    """Fold a frequency into [0, f_s/2] as seen after sampling at f_s.

    Equals the minimum over integers m ≥ 0 of |2m·f_N − f| with f_N = f_s/2.
    Frequencies already at or below Nyquist are returned unchanged.

    Args:
        f: True frequency in Hz (≥ 0).
        f_s: Sampling rate in Hz (> 0).

    Returns:
        Alias frequency in Hz.
    """
    if f < 0:
        raise InvalidArgumentError(f"frequency must be non-negative, got {f}")
    if f_s <= 0:
        raise InvalidArgumentError(f"sampling rate must be positive, got {f_s}")

    if f <= f_s / 2.0:
        return float(f)
    remainder = math.fmod(f, f_s)
    return float(min(remainder, f_s - remainder))


def alias_set(freqs: Sequence[float], f_s: float) -> list[float]:
    """Element-wise alias_frequency, preserving order."""
    return [alias_frequency(f, f_s) for f in freqs]


def sample_signal(sig: SinusoidSum, cfg: SamplingConfig, n: int) -> DiscreteSignal:
    """Point-sample a continuous signal at the config's actual rate.

    samples[k] = Σ amp·sin(2π·f·k/actual_rate + phase).

    Args:
        sig: Continuous signal model.
        cfg: Sampling config; the actual rate is used, not the nominal one.
        n: Number of samples (≥ 1).

    Returns:
        DiscreteSignal tagged with cfg.actual_rate.
    """
    if n < 1:
        raise InvalidArgumentError(f"n must be at least 1, got {n}")

    # k / rate (not k * (1 / rate)) keeps decimated grids bit-identical
    times = np.arange(n) / cfg.actual_rate
    return DiscreteSignal(samples=sig.evaluate(times), rate=cfg.actual_rate)


def decimate(sig: DiscreteSignal, n: int) -> DiscreteSignal:
    """Keep every n-th sample starting at index 0 (no prefilter).

    Args:
        sig: Input signal.
        n: Integer decimation factor (≥ 1).

    Returns:
        Signal at rate sig.base_rate / (sig.decimation · n) with ceil(len / n)
        samples.

    Raises:
        InvalidArgumentError: If n is not an integer ≥ 1.
    """
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"decimation factor must be an integer >= 1, got {n}")
    n = int(n)
    if n == 1:
        return sig
    # Rate derives from the undecimated rate so chained factors compose exactly
    total = sig.decimation * n
    return DiscreteSignal(
        samples=sig.samples[::n],
        rate=sig.base_rate / total,
        start_time=sig.start_time,
        base_rate=sig.base_rate,
        decimation=total,
    )


def num_samples(duration: float, rate: float) -> int:
    """Number of samples a recording of `duration` seconds holds at `rate`."""
    # Tolerance absorbs products like 0.5 * 409.96 landing a hair under an integer
    return int(math.floor(duration * rate + 1e-9))
