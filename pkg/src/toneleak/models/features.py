"""Windowed statistical and spectral features of multi-axis recordings.

This module time-aligns the selected axes of a recording, cuts each axis into
overlapping frames, computes a fixed list of per-frame statistics followed by the
frame's one-sided FFT magnitudes, and concatenates everything in (axis, window,
feature) order, zero-padded to a common length.

Conventions for the statistics (the feature list itself does not define them):
- mean crossings: fraction of adjacent pairs strictly straddling the frame mean
- absolute area: Σ|x| / rate
- signal power: mean of x²
- variation: std / |mean|, 0 when |mean| < 1e-12
- skew / kurtosis: standardized moments (excess kurtosis); 0 for flat frames
- spectral entropy: natural-log Shannon entropy of the normalized one-sided
  power spectrum (DC included); 0 for an all-zero frame
- quantiles: linear interpolation between order statistics
- FFT magnitudes: unnormalized one-sided bins
"""

import logging
import warnings
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy import stats

from toneleak.exceptions import (
    FeatureLengthError,
    InvalidArgumentError,
    RecordingTooShortError,
)
from toneleak.models.dtmf import ToneId
from toneleak.models.sensor_sim import AXIS_NAMES, Recording

logger = logging.getLogger(__name__)

STAT_NAMES: tuple[str, ...] = (
    "mean",
    "median",
    "kurtosis",
    "abs_area",
    "mean_crossings",
    "min",
    "variance",
    "power",
    "std",
    "iqr",
    "range",
    "max",
    "variation",
    "spectral_entropy",
    "skew",
    "q1",
    "q2",
    "q3",
)

_MEAN_EPS = 1e-12


@dataclass(frozen=True)
class WindowingParams:
    """Frame geometry in samples."""

    frame_size: int = 50
    frame_step: int = 5

    def __post_init__(self) -> None:
        if self.frame_size < 2:
            raise InvalidArgumentError(f"frame_size must be >= 2, got {self.frame_size}")
        if not 1 <= self.frame_step <= self.frame_size:
            raise InvalidArgumentError(
                f"frame_step must be in [1, frame_size], got {self.frame_step}"
            )

    def n_windows(self, n_samples: int) -> int:
        """Frames that fit in n_samples (0 when shorter than one frame)."""
        if n_samples < self.frame_size:
            return 0
        return (n_samples - self.frame_size) // self.frame_step + 1

    @property
    def features_per_window(self) -> int:
        return len(STAT_NAMES) + self.frame_size // 2 + 1


@dataclass(frozen=True)
class FeatureLayout:
    axes: tuple[str, ...]
    windows_per_axis: int
    features_per_window: int

    @property
    def natural_length(self) -> int:
        return len(self.axes) * self.windows_per_axis * self.features_per_window


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Fixed-length feature vector of one recording.

    Attributes:
        values: Finite float vector, zero-padded to the target length.
        layout: Axes, windows per axis, features per window before padding.
        label: Tone of the recording, when known.
    """

    values: npt.NDArray[np.float64]
    layout: FeatureLayout
    label: ToneId | None = None

    def __len__(self) -> int:
        return int(self.values.size)


def _check_axes(axes: Sequence[str]) -> tuple[str, ...]:
    chosen = tuple(axes)
    if not chosen:
        raise InvalidArgumentError("at least one axis must be selected")
    unknown = [a for a in chosen if a not in AXIS_NAMES]
    if unknown:
        raise InvalidArgumentError(f"unknown axes {unknown}; choose from {AXIS_NAMES}")
    if len(set(chosen)) != len(chosen):
        raise InvalidArgumentError(f"duplicate axes in {chosen}")
    return chosen


def align_and_window(
    rec: Recording, axes: Sequence[str], params: WindowingParams
) -> dict[str, npt.NDArray[np.float64]]:
    """Cut each selected axis into frames; frame i covers the same samples on
    every axis.

    Returns:
        axis name → (n_frames, frame_size) array. A tail shorter than one frame
        is dropped.

    Raises:
        RecordingTooShortError: If the recording is shorter than one frame.
    """
    chosen = _check_axes(axes)
    if rec.n_samples < params.frame_size:
        raise RecordingTooShortError(
            f"recording has {rec.n_samples} samples, frame needs {params.frame_size}"
        )

    frames = {}
    for name in chosen:
        view = np.lib.stride_tricks.sliding_window_view(
            rec.axis(name).samples, params.frame_size
        )
        frames[name] = np.ascontiguousarray(view[:: params.frame_step])
    return frames


def batch_frame_features(
    frames: npt.NDArray[np.float64], rate: float = 1.0
) -> npt.NDArray[np.float64]:
    """Features of many frames at once.

    Args:
        frames: (n_frames, size) array.
        rate: Sampling rate in Hz (scales the absolute area).

    Returns:
        (n_frames, len(STAT_NAMES) + size // 2 + 1) array.
    """
    x = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if x.shape[1] < 2:
        raise InvalidArgumentError("frames need at least 2 samples")

    mean = x.mean(axis=1)
    centered = x - mean[:, None]
    variance = (centered**2).mean(axis=1)
    std = np.sqrt(variance)
    flat = variance <= (_MEAN_EPS * np.maximum(1.0, np.abs(mean))) ** 2

    with warnings.catch_warnings(), np.errstate(all="ignore"):
        warnings.simplefilter("ignore", RuntimeWarning)
        kurtosis = np.where(flat, 0.0, stats.kurtosis(x, axis=1, fisher=True, bias=True))
        skew = np.where(flat, 0.0, stats.skew(x, axis=1, bias=True))

    crossings = np.where(flat, 0.0, (centered[:, :-1] * centered[:, 1:] < 0).mean(axis=1))
    q1, q2, q3 = np.quantile(x, [0.25, 0.5, 0.75], axis=1)
    x_min = x.min(axis=1)
    x_max = x.max(axis=1)
    abs_mean = np.abs(mean)
    variation = np.where(
        abs_mean < _MEAN_EPS, 0.0, std / np.where(abs_mean < _MEAN_EPS, 1.0, abs_mean)
    )

    spectrum = np.abs(np.fft.rfft(x, axis=1))
    power_spectrum = spectrum**2
    silent = power_spectrum.sum(axis=1) == 0.0
    with warnings.catch_warnings(), np.errstate(all="ignore"):
        warnings.simplefilter("ignore", RuntimeWarning)
        entropy = np.where(silent, 0.0, stats.entropy(power_spectrum, axis=1))

    columns = {
        "mean": mean,
        "median": np.median(x, axis=1),
        "kurtosis": kurtosis,
        "abs_area": np.abs(x).sum(axis=1) / rate,
        "mean_crossings": crossings,
        "min": x_min,
        "variance": variance,
        "power": (x**2).mean(axis=1),
        "std": std,
        "iqr": stats.iqr(x, axis=1),
        "range": x_max - x_min,
        "max": x_max,
        "variation": variation,
        "spectral_entropy": entropy,
        "skew": skew,
        "q1": q1,
        "q2": q2,
        "q3": q3,
    }
    stat_block = np.column_stack([columns[name] for name in STAT_NAMES])
    return np.hstack([stat_block, spectrum])


def frame_features(frame: npt.ArrayLike, rate: float = 1.0) -> npt.NDArray[np.float64]:
    """Features of one frame: STAT_NAMES in order, then one-sided FFT magnitudes."""
    return batch_frame_features(np.asarray(frame, dtype=np.float64)[None, :], rate)[0]


def extract(
    rec: Recording,
    axes: Sequence[str],
    params: WindowingParams,
    target_len: int | None = None,
) -> FeatureVector:
    """Feature vector of a recording in (axis, window, feature) order.

    Args:
        rec: The recording.
        axes: Axis names, concatenated in the given order.
        params: Frame geometry.
        target_len: Padded length; defaults to the natural length.

    Returns:
        FeatureVector zero-padded to target_len.

    Raises:
        RecordingTooShortError: If the recording is shorter than one frame.
        FeatureLengthError: If the natural length exceeds target_len.
    """
    frames = align_and_window(rec, axes, params)
    blocks = [batch_frame_features(f, rec.rate).ravel() for f in frames.values()]
    values = np.concatenate(blocks)

    layout = FeatureLayout(
        axes=tuple(frames),
        windows_per_axis=params.n_windows(rec.n_samples),
        features_per_window=params.features_per_window,
    )
    if target_len is None:
        target_len = values.size
    if values.size > target_len:
        raise FeatureLengthError(
            f"feature vector has {values.size} values, more than target length {target_len}"
        )
    if not np.all(np.isfinite(values)):
        raise InvalidArgumentError("recording produced non-finite features")

    padded = np.zeros(target_len)
    padded[: values.size] = values
    return FeatureVector(values=padded, layout=layout, label=rec.label)


def natural_length(n_samples: int, n_axes: int, params: WindowingParams) -> int:
    """Unpadded feature length for a recording shape."""
    return n_axes * params.n_windows(n_samples) * params.features_per_window


def extract_matrix(
    recordings: Sequence[Recording],
    axes: Sequence[str],
    params: WindowingParams,
    target_len: int | None = None,
    jobs: int = 1,
) -> npt.NDArray[np.float64]:
    """Stack extract() over recordings into an (n_recordings, target_len) matrix.

    target_len defaults to the longest natural length among the recordings.
    """
    chosen = _check_axes(axes)
    if target_len is None:
        target_len = max(
            (natural_length(rec.n_samples, len(chosen), params) for rec in recordings),
            default=0,
        )

    def one(rec: Recording) -> npt.NDArray[np.float64]:
        return extract(rec, chosen, params, target_len).values

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, recordings))
    else:
        rows = [one(rec) for rec in recordings]
    logger.debug("Extracted %d x %d feature matrix for axes %s", len(rows), target_len, chosen)
    return np.vstack(rows) if rows else np.zeros((0, target_len))
