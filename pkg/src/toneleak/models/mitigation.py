"""Signal-processing mitigations against touchtone leakage.

This module provides digital filter design (Butterworth low-pass and notch banks,
both as second-order sections), causal filtering, and the recording-level
mitigations: rate reduction, low-pass filtering, oversampled anti-aliasing, and
notch filtering. It also provides the sampling-rate planner that counts how many
sensitive frequencies alias above a cutoff for each candidate rate.

Design uses scipy.signal (analog prototype, pre-warping, bilinear transform, SOS
factorization); filtering uses sosfilt, i.e. cascaded direct-form-II-transposed
sections with zero initial state.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np
import numpy.typing as npt
from scipy import signal

from toneleak.exceptions import InvalidArgumentError
from toneleak.models.dtmf import DTMF_FREQUENCIES
from toneleak.models.sampling import DiscreteSignal, alias_frequency, alias_set, decimate
from toneleak.models.sensor_sim import DEFAULT_HARMONICS, Recording

logger = logging.getLogger(__name__)

MAX_BUTTERWORTH_ORDER = 12
MITIGATION_KINDS = ("none", "downsample", "lowpass", "antialias", "notch")

_IDENTITY_SECTION = np.array([[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]])


@dataclass(frozen=True, eq=False)
class FilterSpec:
    """A digital IIR filter as a cascade of second-order sections.

    Attributes:
        sos: (n_sections, 6) array of [b0, b1, b2, 1, a1, a2] rows.
        kind: "lowpass" or "notch".
        cutoffs: Cutoff (low-pass) or notch centers in Hz.
        order: Design order (number of notch sections for a bank).
        design_rate: Sampling rate the filter was designed for, in Hz.
    """

    sos: npt.NDArray[np.float64]
    kind: str
    cutoffs: tuple[float, ...]
    order: int
    design_rate: float

    def __post_init__(self) -> None:
        sos = np.atleast_2d(np.asarray(self.sos, dtype=np.float64))
        if sos.ndim != 2 or sos.shape[1] != 6:
            raise InvalidArgumentError(f"sos must be (n, 6), got {sos.shape}")
        if self.cutoffs and self.design_rate <= 2 * max(self.cutoffs):
            raise InvalidArgumentError(
                f"design rate {self.design_rate} Hz must exceed twice the highest "
                f"cutoff {max(self.cutoffs)} Hz"
            )
        sos.setflags(write=False)
        object.__setattr__(self, "sos", sos)
        if not self.is_stable():
            raise InvalidArgumentError(f"{self.kind} design is unstable")

    def poles(self) -> npt.NDArray[np.complex128]:
        return np.concatenate([np.roots(section[3:]) for section in self.sos])

    def is_stable(self) -> bool:
        """All poles strictly inside the unit circle."""
        return bool(np.all(np.abs(self.poles()) < 1.0))

    def magnitude(self, freqs: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """|H(f)| at the given frequencies (Hz)."""
        grid = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
        _, h = signal.sosfreqz(np.array(self.sos), worN=grid, fs=self.design_rate)
        return np.asarray(np.abs(h), dtype=np.float64)

    def impulse_response(self, n: int) -> npt.NDArray[np.float64]:
        impulse = np.zeros(n)
        impulse[0] = 1.0
        return np.asarray(signal.sosfilt(np.array(self.sos), impulse), dtype=np.float64)


@dataclass(frozen=True)
class MitigationConfig:
    """One mitigation and its parameters.

    Attributes:
        kind: One of MITIGATION_KINDS.
        factor: Decimation factor n (downsample).
        cutoff: Cutoff f_c in Hz (lowpass, antialias).
        order: Butterworth order (lowpass, antialias).
        target_rate: Delivered rate in Hz (antialias); derived from oversample
            when omitted.
        oversample: Ratio of capture rate to delivered rate (antialias).
        notch_centers: Notch centers in Hz; None places them on the predicted
            touchtone aliases (notch).
        notch_width: Notch width in Hz (notch).
    """

    kind: str = "none"
    factor: int = 1
    cutoff: float | None = None
    order: int = 5
    target_rate: float | None = None
    oversample: int | None = None
    notch_centers: tuple[float, ...] | None = None
    notch_width: float = 6.0

    def __post_init__(self) -> None:
        if self.kind not in MITIGATION_KINDS:
            raise InvalidArgumentError(
                f"Unknown mitigation {self.kind!r}; choose from {MITIGATION_KINDS}"
            )
        if self.kind == "downsample" and (int(self.factor) != self.factor or self.factor < 1):
            raise InvalidArgumentError(f"downsample factor must be an integer >= 1, got {self.factor}")
        if self.kind in ("lowpass", "antialias"):
            if self.cutoff is None or self.cutoff <= 0:
                raise InvalidArgumentError(f"{self.kind} needs a positive cutoff")
            if not 1 <= self.order <= MAX_BUTTERWORTH_ORDER:
                raise InvalidArgumentError(
                    f"order must be in [1, {MAX_BUTTERWORTH_ORDER}], got {self.order}"
                )
        if self.kind == "antialias":
            if self.target_rate is None and self.oversample is None:
                raise InvalidArgumentError("antialias needs target_rate or oversample")
            if self.target_rate is not None and self.target_rate <= 0:
                raise InvalidArgumentError("target_rate must be positive")
            if self.oversample is not None and self.oversample < 1:
                raise InvalidArgumentError("oversample must be >= 1")
        if self.kind == "notch":
            if self.notch_width <= 0:
                raise InvalidArgumentError("notch_width must be positive")
            if self.notch_centers is not None:
                object.__setattr__(self, "notch_centers", tuple(self.notch_centers))

    def delivered_rate(self, rate: float) -> float:
        """Rate of the mitigated signal given the input rate."""
        if self.kind == "downsample":
            return rate / self.factor
        if self.kind == "antialias":
            return self.resolve_target_rate(rate)
        return rate

    def resolve_target_rate(self, rate: float) -> float:
        if self.target_rate is not None:
            return self.target_rate
        assert self.oversample is not None
        return rate / self.oversample

    def bandwidth(self, rate: float) -> float:
        """Unattenuated bandwidth the mitigated signal still delivers."""
        if self.kind in ("lowpass", "antialias"):
            assert self.cutoff is not None
            return self.cutoff
        return self.delivered_rate(rate) / 2.0

    def label(self) -> str:
        """Short human-readable description, e.g. "lowpass(fc=100,order=5)"."""
        if self.kind == "downsample":
            return f"downsample(n={self.factor})"
        if self.kind == "lowpass":
            return f"lowpass(fc={self.cutoff:g},order={self.order})"
        if self.kind == "antialias":
            target = self.target_rate if self.target_rate is not None else f"rate/{self.oversample}"
            return f"antialias(fc={self.cutoff:g},order={self.order},target={target})"
        if self.kind == "notch":
            centers = "auto" if self.notch_centers is None else len(self.notch_centers)
            return f"notch(centers={centers},width={self.notch_width:g})"
        return "none"

    def to_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        if self.notch_centers is not None:
            doc["notch_centers"] = list(self.notch_centers)
        return doc

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "MitigationConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgumentError(f"Unknown mitigation keys: {sorted(unknown)}")
        values = dict(doc)
        if values.get("notch_centers") is not None:
            values["notch_centers"] = tuple(float(c) for c in values["notch_centers"])
        return cls(**values)


@dataclass(frozen=True)
class SamplingPlan:
    """Result of plan_sampling_rate.

    Attributes:
        table: (candidate rate, attenuable count) per candidate, input order.
        best_rate: Smallest candidate reaching the maximum count (None if no
            candidates).
    """

    table: tuple[tuple[float, int], ...]
    best_rate: float | None = field(default=None)


def butterworth_lowpass(order: int, f_c: float, rate: float) -> FilterSpec:
    """Design a digital Butterworth low-pass filter.

    Analog prototype, pre-warped bilinear transform, second-order sections.
    |H(0)| = 1 and |H(f_c)| = 1/√2.

    Args:
        order: Filter order in [1, 12].
        f_c: -3 dB cutoff in Hz, 0 < f_c < rate / 2.
        rate: Sampling rate the filter runs at, in Hz.

    Raises:
        InvalidArgumentError: On an out-of-range order or cutoff.
    """
    if not 1 <= order <= MAX_BUTTERWORTH_ORDER:
        raise InvalidArgumentError(
            f"order must be in [1, {MAX_BUTTERWORTH_ORDER}], got {order}"
        )
    if rate <= 0:
        raise InvalidArgumentError(f"rate must be positive, got {rate}")
    if not 0 < f_c < rate / 2:
        raise InvalidArgumentError(
            f"cutoff {f_c} Hz must lie in (0, {rate / 2}) Hz for rate {rate} Hz"
        )

    sos = signal.butter(order, f_c, btype="lowpass", fs=rate, output="sos")
    logger.debug("Designed order-%d Butterworth at %.3g Hz (rate %.6g Hz)", order, f_c, rate)
    return FilterSpec(sos=sos, kind="lowpass", cutoffs=(f_c,), order=order, design_rate=rate)


def notch_bank(centers: Sequence[float], width: float, rate: float) -> FilterSpec:
    """Design a cascade of second-order notch filters.

    Each section is a biquad notch with quality factor Q = center / width.
    An empty center list yields the identity filter.

    Args:
        centers: Notch centers in Hz.
        width: Notch width (-3 dB) in Hz.
        rate: Sampling rate in Hz.

    Raises:
        InvalidArgumentError: If any center ± width/2 leaves (0, rate/2).
    """
    if width <= 0:
        raise InvalidArgumentError(f"notch width must be positive, got {width}")
    nyquist = rate / 2.0
    sections = []
    for center in centers:
        if not (center - width / 2 > 0 and center + width / 2 < nyquist):
            raise InvalidArgumentError(
                f"notch {center} ± {width / 2} Hz must lie inside (0, {nyquist}) Hz"
            )
        b, a = signal.iirnotch(center, center / width, fs=rate)
        sections.append(np.concatenate([b, a]))

    sos = np.array(sections) if sections else _IDENTITY_SECTION.copy()
    return FilterSpec(
        sos=sos, kind="notch", cutoffs=tuple(centers), order=len(sections), design_rate=rate
    )


def apply_filter(spec: FilterSpec, sig: DiscreteSignal) -> DiscreteSignal:
    """Filter a signal causally from zero initial state.

    Raises:
        InvalidArgumentError: If the signal rate differs from the design rate.
    """
    if not math.isclose(sig.rate, spec.design_rate, rel_tol=1e-9):
        raise InvalidArgumentError(
            f"signal rate {sig.rate} Hz does not match filter design rate "
            f"{spec.design_rate} Hz"
        )
    # sosfilt's compiled kernel rejects read-only coefficient buffers
    filtered = signal.sosfilt(np.array(spec.sos), sig.samples)
    return replace(sig, samples=filtered)


def mitigate_downsample(rec: Recording, n: int) -> Recording:
    """Reduce the rate by n, keeping every n-th sample of every axis."""
    return rec.with_axes([decimate(sig, n) for sig in rec.axes])


def mitigate_lowpass(rec: Recording, f_c: float, order: int = 5) -> Recording:
    """Butterworth low-pass every axis at the recording's own rate."""
    spec = butterworth_lowpass(order, f_c, rec.rate)
    return rec.with_axes([apply_filter(spec, sig) for sig in rec.axes])


def mitigate_antialias(
    rec_oversampled: Recording, target_rate: float, f_c: float, order: int = 8
) -> Recording:
    """Low-pass at the oversampled rate, then decimate down to target_rate.

    Args:
        rec_oversampled: Recording captured at an integer multiple of target_rate.
        target_rate: Rate delivered to applications, in Hz.
        f_c: Cutoff in Hz, at most target_rate / 2.
        order: Butterworth order.

    Raises:
        InvalidArgumentError: If the rate ratio is not an integer or f_c exceeds
            the delivered Nyquist frequency.
    """
    if target_rate <= 0:
        raise InvalidArgumentError(f"target_rate must be positive, got {target_rate}")
    ratio = rec_oversampled.rate / target_rate
    factor = round(ratio)
    if factor < 1 or not math.isclose(ratio, factor, rel_tol=1e-9):
        raise InvalidArgumentError(
            f"recording rate {rec_oversampled.rate} Hz is not an integer multiple of "
            f"target rate {target_rate} Hz"
        )
    if f_c > target_rate / 2:
        raise InvalidArgumentError(
            f"cutoff {f_c} Hz exceeds the delivered Nyquist frequency {target_rate / 2} Hz"
        )

    spec = butterworth_lowpass(order, f_c, rec_oversampled.rate)
    return rec_oversampled.with_axes(
        [decimate(apply_filter(spec, sig), factor) for sig in rec_oversampled.axes]
    )


def predicted_aliases(
    rate: float,
    freqs: Sequence[float] = DTMF_FREQUENCIES,
    harmonics: Sequence[tuple[int, float]] = DEFAULT_HARMONICS,
) -> list[float]:
    """Sorted, de-duplicated aliases of freqs and their harmonics at `rate`."""
    true_freqs = list(freqs) + [k * f for f in freqs for k, _ in harmonics]
    return sorted({round(a, 9) for a in alias_set(true_freqs, rate)})


def mitigate_notch(
    rec: Recording, centers: Sequence[float] | None = None, width: float = 6.0
) -> Recording:
    """Notch every axis at the given centers (or at the predicted tone aliases).

    With centers=None, centers whose notch would not fit inside (0, rate/2) are
    dropped with a warning.
    """
    if centers is None:
        nyquist = rec.rate / 2.0
        candidates = predicted_aliases(rec.rate)
        centers = [c for c in candidates if width / 2 < c < nyquist - width / 2]
        dropped = len(candidates) - len(centers)
        if dropped:
            logger.warning(
                "Dropped %d alias notches too close to 0 or %.1f Hz", dropped, nyquist
            )
    spec = notch_bank(centers, width, rec.rate)
    return rec.with_axes([apply_filter(spec, sig) for sig in rec.axes])


def apply_mitigation(rec: Recording, cfg: MitigationConfig) -> Recording:
    """Dispatch a MitigationConfig onto a recording."""
    if cfg.kind == "none":
        return rec
    if cfg.kind == "downsample":
        return mitigate_downsample(rec, cfg.factor)
    if cfg.kind == "lowpass":
        assert cfg.cutoff is not None
        return mitigate_lowpass(rec, cfg.cutoff, cfg.order)
    if cfg.kind == "antialias":
        assert cfg.cutoff is not None
        return mitigate_antialias(rec, cfg.resolve_target_rate(rec.rate), cfg.cutoff, cfg.order)
    return mitigate_notch(rec, cfg.notch_centers, cfg.notch_width)


def plan_sampling_rate(
    sensitive: Sequence[float], f_c: float, candidates: Sequence[float]
) -> SamplingPlan:
    """Count, per candidate rate, the sensitive frequencies aliasing above f_c.

    A frequency whose alias lands above the cutoff can be removed by a low-pass
    at f_c without losing the delivered band.

    Args:
        sensitive: True frequencies to protect (Hz).
        f_c: Cutoff in Hz (≥ 0; 0 counts every non-zero alias).
        candidates: Candidate sampling rates, each > 2·f_c.

    Returns:
        SamplingPlan with the full table and the smallest best rate.

    Raises:
        InvalidArgumentError: If f_c < 0 or a candidate does not exceed 2·f_c.
    """
    if f_c < 0:
        raise InvalidArgumentError(f"cutoff must be non-negative, got {f_c}")
    for f_s in candidates:
        if f_s <= 2 * f_c:
            raise InvalidArgumentError(
                f"candidate rate {f_s} Hz must exceed twice the cutoff ({2 * f_c} Hz)"
            )

    table = tuple(
        (float(f_s), sum(1 for f in sensitive if alias_frequency(f, f_s) > f_c))
        for f_s in candidates
    )
    best_rate = None
    if table:
        best_count = max(count for _, count in table)
        best_rate = min(f_s for f_s, count in table if count == best_count)
    logger.debug("Sampling plan at f_c=%.3g Hz: %s (best %s)", f_c, table, best_rate)
    return SamplingPlan(table=table, best_rate=best_rate)
