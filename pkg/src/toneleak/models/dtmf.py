"""Touchtone (DTMF) alphabet and continuous-time tone models.

This module provides the ToneId enum for the 16 touchtone symbols, the ToneTable
mapping them to their (low, high) frequency pairs, and SinusoidSum, an exact
continuous-time signal model that can be point-sampled at any rate.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import total_ordering
from typing import NamedTuple

import numpy as np
import numpy.typing as npt

from toneleak.exceptions import AmbiguousToneError, InvalidArgumentError

logger = logging.getLogger(__name__)


@total_ordering
class ToneId(Enum):
    """The 16 touchtone symbols, in keypad reading order.

    The declaration order defines the total ordering used for deterministic
    iteration and for the class index of the classifier (1 → 0, ..., D → 15).
    """

    ONE = "1"
    TWO = "2"
    THREE = "3"
    A = "A"
    FOUR = "4"
    FIVE = "5"
    SIX = "6"
    B = "B"
    SEVEN = "7"
    EIGHT = "8"
    NINE = "9"
    C = "C"
    STAR = "*"
    ZERO = "0"
    HASH = "#"
    D = "D"

    @property
    def symbol(self) -> str:
        """Keypad symbol, e.g. "5"."""
        return str(self.value)

    @property
    def index(self) -> int:
        """Zero-based position in keypad order."""
        return _TONE_ORDER[self]

    @classmethod
    def from_index(cls, index: int) -> "ToneId":
        """Inverse of `index`."""
        return ALL_TONES[index]

    @classmethod
    def parse(cls, tone: "ToneId | str") -> "ToneId":
        """Accept a ToneId or its symbol string.

        Raises:
            InvalidArgumentError: If the symbol is not one of the 16 touchtones.
        """
        if isinstance(tone, ToneId):
            return tone
        try:
            return cls(str(tone).upper())
        except ValueError as e:
            raise InvalidArgumentError(f"Unknown touchtone symbol: {tone!r}") from e

    def __lt__(self, other: object) -> bool:
        if not isinstance(other, ToneId):
            return NotImplemented
        return self.index < other.index


ALL_TONES: tuple[ToneId, ...] = tuple(ToneId)
_TONE_ORDER: dict[ToneId, int] = {tone: i for i, tone in enumerate(ALL_TONES)}
NUM_TONES = len(ALL_TONES)


@dataclass(frozen=True)
class ToneTable:
    """Frequency table of a dual-tone keypad.

    Attributes:
        rows: The 4 low-group frequencies in Hz.
        cols: The 4 high-group frequencies in Hz.
        mapping: Tone → (row Hz, col Hz), derived from the keypad layout.
    """

    rows: tuple[float, float, float, float]
    cols: tuple[float, float, float, float]
    mapping: dict[ToneId, tuple[float, float]] = field(init=False, compare=False)

    def __post_init__(self) -> None:
        freqs = self.rows + self.cols
        if len(set(freqs)) != len(freqs):
            raise InvalidArgumentError("Keypad frequencies must be distinct")
        if max(self.rows) >= min(self.cols):
            raise InvalidArgumentError("Low group must lie strictly below high group")

        mapping = {
            tone: (self.rows[i // 4], self.cols[i % 4])
            for i, tone in enumerate(ALL_TONES)
        }
        object.__setattr__(self, "mapping", mapping)

    @property
    def frequencies(self) -> tuple[float, ...]:
        """All 8 frequencies in row-then-col order."""
        return self.rows + self.cols

    def min_gap(self) -> float:
        """Smallest distance between any two keypad frequencies."""
        freqs = sorted(self.frequencies)
        return min(b - a for a, b in zip(freqs, freqs[1:], strict=False))

    def to_json(self) -> str:
        """Serialize as {symbol: [low, high]} in keypad order."""
        doc = {tone.symbol: list(pair) for tone, pair in self.mapping.items()}
        return json.dumps(doc, indent=2)


# Standard DTMF keypad
DTMF_TABLE = ToneTable(rows=(697.0, 770.0, 852.0, 941.0), cols=(1209.0, 1336.0, 1477.0, 1633.0))
DTMF_FREQUENCIES: tuple[float, ...] = DTMF_TABLE.frequencies


class Component(NamedTuple):
    """One sinusoid: amplitude · sin(2π·frequency·t + phase)."""

    frequency: float
    amplitude: float
    phase: float = 0.0


@dataclass(frozen=True)
class SinusoidSum:
    """Continuous-time signal made of a finite sum of sinusoids.

    Attributes:
        components: (frequency Hz, amplitude, phase rad) triples.
        duration: Signal length in seconds.
    """

    components: tuple[Component, ...]
    duration: float

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "components", tuple(Component(*c) for c in self.components)
        )
        if self.duration <= 0:
            raise InvalidArgumentError(f"duration must be positive, got {self.duration}")
        for comp in self.components:
            if comp.frequency <= 0:
                raise InvalidArgumentError(
                    f"component frequency must be positive, got {comp.frequency}"
                )

    @property
    def frequencies(self) -> list[float]:
        return [c.frequency for c in self.components]

    def evaluate(self, t: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """Evaluate the signal exactly at the given time instants (seconds)."""
        times = np.asarray(t, dtype=np.float64)
        out = np.zeros_like(times)
        for freq, amp, phase in self.components:
            out += amp * np.sin(2.0 * math.pi * freq * times + phase)
        return out


def tone_frequencies(tone: ToneId | str) -> tuple[float, float]:
    """Return the (low, high) frequency pair of a touchtone.

    Args:
        tone: A ToneId or its keypad symbol.

    Returns:
        (row Hz, col Hz) from the standard DTMF table.
    """
    return DTMF_TABLE.mapping[ToneId.parse(tone)]


def synthesize_tone(
    tone: ToneId | str, duration: float, amplitude: float = 1.0
) -> SinusoidSum:
    """Build the dual-tone signal of a keypress.

    The amplitude is split equally between the two components, both at zero
    phase.

    Args:
        tone: A ToneId or its keypad symbol.
        duration: Tone length in seconds.
        amplitude: Total amplitude (each component gets half).

    Returns:
        SinusoidSum with exactly two components.

    Raises:
        InvalidArgumentError: If duration or amplitude is not positive.
    """
    if duration <= 0:
        raise InvalidArgumentError(f"duration must be positive, got {duration}")
    if amplitude <= 0:
        raise InvalidArgumentError(f"amplitude must be positive, got {amplitude}")

    low, high = tone_frequencies(tone)
    half = amplitude / 2.0
    return SinusoidSum(
        components=(Component(low, half, 0.0), Component(high, half, 0.0)),
        duration=duration,
    )


def classify_frequency_pair(f1: float, f2: float, tol: float) -> ToneId | None:
    """Decode a frequency pair back to its touchtone.

    The pair may be given in either order; the lower value is matched against the
    row group and the higher one against the column group.

    Args:
        f1: First detected frequency in Hz.
        f2: Second detected frequency in Hz.
        tol: Maximum absolute deviation in Hz for both frequencies.

    Returns:
        The unique matching ToneId, or None when nothing matches.

    Raises:
        InvalidArgumentError: If tol is negative.
        AmbiguousToneError: If more than one tone matches within tol.
    """
    if tol < 0:
        raise InvalidArgumentError(f"tol must be non-negative, got {tol}")

    low, high = sorted((f1, f2))
    matches = [
        tone
        for tone, (row, col) in DTMF_TABLE.mapping.items()
        if abs(row - low) <= tol and abs(col - high) <= tol
    ]

    if len(matches) > 1:
        logger.debug("Ambiguous pair (%.2f, %.2f) at tol=%.2f: %s", f1, f2, tol, matches)
        raise AmbiguousToneError(
            f"({f1}, {f2}) matches {len(matches)} tones within {tol} Hz: "
            + ", ".join(t.symbol for t in matches)
        )
    return matches[0] if matches else None
