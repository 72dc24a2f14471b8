"""Touchtone leakage into a simulated 6-axis motion sensor.

This module models the speaker → IMU channel as a per-axis, per-component gain
(piecewise-linear curve plus resonance peaks), integer harmonics, and additive
Gaussian noise. Every axis is point-sampled exactly, so tone aliases, harmonics,
and aliases of harmonics all appear without being injected. It also generates
labeled, stratified datasets following the recording protocol (randomized order,
equal counts per tone, 80/20 split).

Random streams are Philox generators keyed by SeedSequence spawn keys, so every
recording's randomness depends only on (master seed, recording index) and
generation can run in any order or in parallel.
"""

import itertools
import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import numpy.typing as npt

from toneleak.exceptions import InvalidArgumentError
from toneleak.models.dtmf import (
    ALL_TONES,
    DTMF_FREQUENCIES,
    Component,
    SinusoidSum,
    ToneId,
    classify_frequency_pair,
    synthesize_tone,
)
from toneleak.models.sampling import (
    DiscreteSignal,
    SamplingConfig,
    num_samples,
    sample_signal,
)
from toneleak.utils.random_streams import derive_seed, make_rng

logger = logging.getLogger(__name__)

AXIS_NAMES: tuple[str, ...] = ("ax", "ay", "az", "gx", "gy", "gz")
NUM_AXES = len(AXIS_NAMES)

# (harmonic order, amplitude relative to the fundamental)
DEFAULT_HARMONICS: tuple[tuple[int, float], ...] = ((2, 0.3), (3, 0.1))

# Highest frequency the gain curves are defined on; queries beyond are clamped
DEFAULT_F_MAX = 5000.0

PROFILES = ("flat", "resonant", "noisy", "silent")

# Stream identifiers under a master seed
_STREAM_ORDER = 0
_STREAM_SPLIT = 1
_STREAM_RECORDING = 2


def recording_seed(master_seed: int, index: int) -> int:
    """Per-recording seed, a hash of (master_seed, index)."""
    return derive_seed(master_seed, _STREAM_RECORDING, index)


@dataclass(frozen=True)
class AxisResponse:
    """Frequency response of one sensor axis to airborne sound.

    gain(f) = interp(f; curve) + Σ peak / (1 + ((f − center) / (width / 2))²)

    Attributes:
        curve_freqs: Increasing breakpoints of the piecewise-linear base curve (Hz).
        curve_gains: Linear gains at the breakpoints (≥ 0).
        resonances: (center Hz, peak gain, width Hz) Lorentzian peaks.
    """

    curve_freqs: tuple[float, ...] = (0.0, DEFAULT_F_MAX)
    curve_gains: tuple[float, ...] = (1.0, 1.0)
    resonances: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self) -> None:
        if len(self.curve_freqs) != len(self.curve_gains) or len(self.curve_freqs) < 2:
            raise InvalidArgumentError("gain curve needs >= 2 matching breakpoints")
        if any(b <= a for a, b in itertools.pairwise(self.curve_freqs)):
            raise InvalidArgumentError("gain curve breakpoints must be increasing")
        if any(g < 0 for g in self.curve_gains):
            raise InvalidArgumentError("gains must be non-negative")
        for center, peak, width in self.resonances:
            if peak < 0 or width <= 0 or center < 0:
                raise InvalidArgumentError(
                    f"invalid resonance (center={center}, peak={peak}, width={width})"
                )

    @classmethod
    def constant(cls, gain: float) -> "AxisResponse":
        return cls(curve_gains=(gain, gain))

    @property
    def f_max(self) -> float:
        return self.curve_freqs[-1]

    def gain(self, f: npt.ArrayLike) -> npt.NDArray[np.float64]:
        """Linear gain at frequency/frequencies f (Hz)."""
        freqs = np.asarray(f, dtype=np.float64)
        g = np.interp(freqs, self.curve_freqs, self.curve_gains)
        for center, peak, width in self.resonances:
            g = g + peak / (1.0 + ((freqs - center) / (width / 2.0)) ** 2)
        return g


@dataclass(frozen=True)
class SensorModel:
    """Leakage channel of a 6-axis IMU.

    Attributes:
        axes: One AxisResponse per axis, in AXIS_NAMES order.
        noise_std: Additive Gaussian noise std per axis (sensor units).
        harmonic_gains: (order k ≥ 2, relative amplitude in [0, 1]) pairs.
        cfg: Sampling rates.
        rng_seed: Seed the preset was built from.
        model_id: Preset name (or any label) carried into recording metadata.
    """

    axes: tuple[AxisResponse, ...]
    noise_std: tuple[float, ...]
    harmonic_gains: tuple[tuple[int, float], ...] = DEFAULT_HARMONICS
    cfg: SamplingConfig = field(default_factory=lambda: SamplingConfig(400.0))
    rng_seed: int = 0
    model_id: str = "custom"

    def __post_init__(self) -> None:
        if len(self.axes) != NUM_AXES or len(self.noise_std) != NUM_AXES:
            raise InvalidArgumentError(f"a sensor model needs exactly {NUM_AXES} axes")
        if any(s < 0 for s in self.noise_std):
            raise InvalidArgumentError("noise_std must be non-negative")
        for order, rel in self.harmonic_gains:
            if order < 2 or not 0.0 <= rel <= 1.0:
                raise InvalidArgumentError(
                    f"invalid harmonic (order={order}, relative amplitude={rel})"
                )


@dataclass(frozen=True)
class RecordingMeta:
    """Provenance of a recording."""

    model_id: str
    seed: int
    duration: float


@dataclass(frozen=True, eq=False)
class Recording:
    """One labeled 6-axis capture of a touchtone.

    Attributes:
        label: The tone that was played.
        axes: Six DiscreteSignals (ax, ay, az, gx, gy, gz) of equal length, rate,
            and start time.
        meta: Provenance.
    """

    label: ToneId
    axes: tuple[DiscreteSignal, ...]
    meta: RecordingMeta

    def __post_init__(self) -> None:
        if len(self.axes) != NUM_AXES:
            raise InvalidArgumentError(f"a recording needs exactly {NUM_AXES} axes")
        first = self.axes[0]
        for sig in self.axes[1:]:
            if (
                len(sig) != len(first)
                or sig.rate != first.rate
                or sig.start_time != first.start_time
            ):
                raise InvalidArgumentError(
                    "all axes of a recording must share length, rate, and start time"
                )

    @property
    def rate(self) -> float:
        return self.axes[0].rate

    @property
    def n_samples(self) -> int:
        return len(self.axes[0])

    def axis(self, name: str) -> DiscreteSignal:
        return self.axes[AXIS_NAMES.index(name)]

    def as_matrix(self) -> npt.NDArray[np.float64]:
        """Samples as an (n_samples, 6) array."""
        return np.column_stack([sig.samples for sig in self.axes])

    def with_axes(self, axes: Sequence[DiscreteSignal]) -> "Recording":
        """Same label and provenance, new signals."""
        return replace(self, axes=tuple(axes))

    def equals(self, other: "Recording") -> bool:
        return (
            self.label == other.label
            and self.meta == other.meta
            and all(a.equals(b) for a, b in zip(self.axes, other.axes, strict=True))
        )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Recordings plus a disjoint, stratified train/test split.

    Attributes:
        recordings: All recordings in generation order.
        train_indices: Positions of training recordings.
        test_indices: Positions of test recordings.
    """

    recordings: tuple[Recording, ...]
    train_indices: tuple[int, ...]
    test_indices: tuple[int, ...]

    def __post_init__(self) -> None:
        if set(self.train_indices) & set(self.test_indices):
            raise InvalidArgumentError("train and test indices overlap")
        n = len(self.recordings)
        if any(not 0 <= i < n for i in self.train_indices + self.test_indices):
            raise InvalidArgumentError("split index out of range")

    @property
    def labels(self) -> list[ToneId]:
        return [rec.label for rec in self.recordings]

    @property
    def train(self) -> list[Recording]:
        return [self.recordings[i] for i in self.train_indices]

    @property
    def test(self) -> list[Recording]:
        return [self.recordings[i] for i in self.test_indices]

    def map_recordings(self, fn: Callable[[Recording], Recording]) -> "Dataset":
        """Apply fn to every recording, keeping the split."""
        return replace(self, recordings=tuple(fn(rec) for rec in self.recordings))


def enrich_tone(
    tone_sig: SinusoidSum,
    harmonic_gains: Sequence[tuple[int, float]],
    rng: np.random.Generator,
) -> SinusoidSum:
    """Add harmonics and draw a uniform random phase for every component.

    Fundamentals come first, then for each fundamental its harmonics in the order
    given. Phases are drawn in that same order.
    """
    components: list[Component] = []
    for freq, amp, _ in tone_sig.components:
        components.append(Component(freq, amp))
        for order, rel in harmonic_gains:
            components.append(Component(order * freq, amp * rel))

    phases = rng.uniform(0.0, 2.0 * math.pi, size=len(components))
    return SinusoidSum(
        components=tuple(
            Component(c.frequency, c.amplitude, float(p))
            for c, p in zip(components, phases, strict=True)
        ),
        duration=tone_sig.duration,
    )


def leak(
    tone_sig: SinusoidSum,
    model: SensorModel,
    per_recording_seed: int,
    label: ToneId | None = None,
) -> Recording:
    """Simulate what the IMU records while a tone plays.

    For each axis every component of the enriched tone is scaled by the axis gain
    at its true (pre-sampling) frequency, the sum is point-sampled at the actual
    rate, and zero-mean Gaussian noise with the axis noise_std is added.

    Args:
        tone_sig: The played tone.
        model: Channel model.
        per_recording_seed: Seed of this recording's phases and noise.
        label: Tone label; inferred from the two fundamentals when omitted.

    Returns:
        A 6-axis Recording.

    Raises:
        InvalidArgumentError: If the tone is shorter than one sample period.
    """
    rate = model.cfg.actual_rate
    n = num_samples(tone_sig.duration, rate)
    if n < 1:
        raise InvalidArgumentError(
            f"a {tone_sig.duration}s tone yields no samples at {rate} Hz"
        )

    if label is None:
        label = _infer_label(tone_sig)

    rng = make_rng(per_recording_seed)
    enriched = enrich_tone(tone_sig, model.harmonic_gains, rng)
    freqs = np.array(enriched.frequencies)

    signals = []
    for response, noise_std in zip(model.axes, model.noise_std, strict=True):
        gains = response.gain(freqs)
        scaled = SinusoidSum(
            components=tuple(
                Component(c.frequency, c.amplitude * float(g), c.phase)
                for c, g in zip(enriched.components, gains, strict=True)
            ),
            duration=enriched.duration,
        )
        clean = sample_signal(scaled, model.cfg, n)
        noise = rng.normal(0.0, noise_std, size=n)
        signals.append(DiscreteSignal(samples=clean.samples + noise, rate=rate))

    logger.debug("Leaked tone %s with seed %d (%d samples)", label.symbol, per_recording_seed, n)
    return Recording(
        label=label,
        axes=tuple(signals),
        meta=RecordingMeta(
            model_id=model.model_id, seed=per_recording_seed, duration=tone_sig.duration
        ),
    )


def _infer_label(tone_sig: SinusoidSum) -> ToneId:
    freqs = tone_sig.frequencies
    tone = classify_frequency_pair(freqs[0], freqs[1], tol=0.0) if len(freqs) == 2 else None
    if tone is None:
        raise InvalidArgumentError("cannot infer a touchtone label; pass label=")
    return tone


def holdout_count(count: int, fraction: float) -> int:
    """Held-out count for a class of `count` items (round half up, at least one
    item kept on each side when count ≥ 2)."""
    n_test = int(math.floor(count * fraction + 0.5))
    if count >= 2:
        n_test = min(max(n_test, 1), count - 1)
    return n_test


def stratified_split(
    labels: Sequence[ToneId], fraction: float, rng: np.random.Generator
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split positions so each class contributes holdout_count(...) held-out items.

    Args:
        labels: Class of each position.
        fraction: Held-out fraction in (0, 1).
        rng: Generator choosing which items of each class are held out.

    Returns:
        (kept indices, held-out indices), both sorted.
    """
    if not 0.0 < fraction < 1.0:
        raise InvalidArgumentError(f"split fraction must be in (0, 1), got {fraction}")

    kept: list[int] = []
    held: list[int] = []
    for tone in sorted(set(labels)):
        members = np.array([i for i, lab in enumerate(labels) if lab == tone])
        shuffled = rng.permutation(members)
        n_held = holdout_count(len(members), fraction)
        held.extend(int(i) for i in shuffled[:n_held])
        kept.extend(int(i) for i in shuffled[n_held:])
    return tuple(sorted(kept)), tuple(sorted(held))


def generate_dataset(
    model: SensorModel,
    reps_per_tone: int,
    duration: float,
    master_seed: int,
    amplitude: float = 1.0,
    test_fraction: float = 0.2,
    jobs: int = 1,
) -> Dataset:
    """Record every tone reps_per_tone times in a seeded random order.

    Args:
        model: Channel model.
        reps_per_tone: Recordings per tone (≥ 1).
        duration: Tone length in seconds.
        master_seed: Seed of the order, the split, and every recording.
        amplitude: Tone amplitude.
        test_fraction: Held-out share per tone.
        jobs: Worker threads for recording generation.

    Returns:
        Dataset of 16 × reps_per_tone recordings with a stratified split.
    """
    if reps_per_tone < 1:
        raise InvalidArgumentError(f"reps_per_tone must be at least 1, got {reps_per_tone}")

    plan = [tone for tone in ALL_TONES for _ in range(reps_per_tone)]
    order = make_rng(master_seed, _STREAM_ORDER).permutation(len(plan))
    labels = [plan[i] for i in order]

    def record(index: int) -> Recording:
        tone = labels[index]
        return leak(
            synthesize_tone(tone, duration, amplitude),
            model,
            recording_seed(master_seed, index),
            label=tone,
        )

    logger.info(
        "Generating %d recordings (%s, %.3g s @ %.2f Hz, jobs=%d)",
        len(labels),
        model.model_id,
        duration,
        model.cfg.actual_rate,
        jobs,
    )
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            recordings = tuple(pool.map(record, range(len(labels))))
    else:
        recordings = tuple(record(i) for i in range(len(labels)))

    train, test = stratified_split(
        labels, test_fraction, make_rng(master_seed, _STREAM_SPLIT)
    )
    logger.info("Split: %d train / %d test", len(train), len(test))
    return Dataset(recordings=recordings, train_indices=train, test_indices=test)


def _has_complementary_axes(axes: Sequence[AxisResponse], ratio: float = 2.0) -> bool:
    """True when two axes differ in gain by ≥ ratio at some DTMF frequency."""
    gains = np.array([axis.gain(DTMF_FREQUENCIES) for axis in axes])
    return bool(np.any(gains.max(axis=0) >= ratio * gains.min(axis=0)))


def make_default_model(
    profile: str,
    seed: int,
    nominal_rate: float = 400.0,
    device: str | None = None,
) -> SensorModel:
    """Build a named channel preset.

    Profiles:
        flat: every gain 1.0, noise_std 0.01 on every axis.
        resonant: low base gain with 1–3 random resonance peaks in [50, 2000] Hz
            per axis, so axes carry complementary information; moderate noise.
        noisy: flat gains buried in strong noise.
        silent: every gain 0.0, so recordings carry only sensor noise (0.05)
            and no trace of the tone.

    Args:
        profile: One of PROFILES.
        seed: Seed of the random resonance layout.
        nominal_rate: Sensor rate in Hz (ignored when device is given).
        device: Optional DEVICE_RATES key supplying (nominal, actual) rates.

    Returns:
        A deterministic SensorModel.

    Raises:
        InvalidArgumentError: If the profile or device is unknown.
    """
    cfg = SamplingConfig.for_device(device) if device else SamplingConfig(nominal_rate)

    if profile == "flat":
        axes = tuple(AxisResponse() for _ in AXIS_NAMES)
        noise = (0.01,) * NUM_AXES
    elif profile == "noisy":
        axes = tuple(AxisResponse() for _ in AXIS_NAMES)
        noise = (0.4, 0.4, 0.4, 0.6, 0.6, 0.6)
    elif profile == "silent":
        axes = tuple(AxisResponse.constant(0.0) for _ in AXIS_NAMES)
        noise = (0.05,) * NUM_AXES
    elif profile == "resonant":
        axes = _resonant_axes(seed)
        noise = (0.05,) * NUM_AXES
    else:
        raise InvalidArgumentError(f"Unknown sensor profile {profile!r}; choose from {PROFILES}")

    logger.debug("Built %s sensor model (seed=%d, rate=%.2f Hz)", profile, seed, cfg.actual_rate)
    return SensorModel(
        axes=axes,
        noise_std=noise,
        harmonic_gains=DEFAULT_HARMONICS,
        cfg=cfg,
        rng_seed=seed,
        model_id=profile,
    )


def _resonant_axes(seed: int) -> tuple[AxisResponse, ...]:
    for attempt in itertools.count():
        rng = make_rng(seed, attempt)
        axes = []
        for _ in AXIS_NAMES:
            n_peaks = int(rng.integers(1, 4))
            peaks = tuple(
                (
                    float(rng.uniform(50.0, 2000.0)),
                    float(rng.uniform(1.0, 3.0)),
                    float(rng.uniform(100.0, 400.0)),
                )
                for _ in range(n_peaks)
            )
            axes.append(AxisResponse(curve_gains=(0.25, 0.25), resonances=peaks))
        if _has_complementary_axes(axes):
            return tuple(axes)
        logger.debug("Resonant layout attempt %d lacks complementary axes", attempt)
    raise AssertionError("unreachable")  # pragma: no cover


def probe_axis_response(
    model: SensorModel, start_hz: float, stop_hz: float, n_points: int = 161
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    """Sweep every axis gain over [start_hz, stop_hz].

    Returns:
        (frequencies, gains) with gains shaped (n_points, 6).
    """
    if n_points < 2 or stop_hz <= start_hz or start_hz < 0:
        raise InvalidArgumentError("probe needs start_hz < stop_hz and n_points >= 2")
    freqs = np.linspace(start_hz, stop_hz, n_points)
    gains = np.column_stack([axis.gain(freqs) for axis in model.axes])
    return freqs, gains
