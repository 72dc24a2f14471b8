"""Experiment configuration and sweep result types.

The harness is configured by one frozen ExperimentConfig tree; every field has a
default so an empty JSON object is a valid configuration.
"""

import logging
from dataclasses import dataclass, field

from toneleak.exceptions import ConfigError, InvalidArgumentError
from toneleak.models.classifier import GbtHyperparams
from toneleak.models.features import WindowingParams
from toneleak.models.mitigation import MitigationConfig
from toneleak.models.sampling import DEVICE_RATES
from toneleak.models.sensor_sim import PROFILES

logger = logging.getLogger(__name__)

# Decimation factors and low-pass cutoffs swept by default (cutoffs stay below
# the 200 Hz Nyquist frequency of a 400 Hz sensor)
DEFAULT_SWEEP_GRID: tuple[MitigationConfig, ...] = (
    MitigationConfig(kind="downsample", factor=1),
    MitigationConfig(kind="downsample", factor=2),
    MitigationConfig(kind="downsample", factor=4),
    MitigationConfig(kind="downsample", factor=8),
    MitigationConfig(kind="lowpass", cutoff=199.9, order=5),
    MitigationConfig(kind="lowpass", cutoff=150.0, order=5),
    MitigationConfig(kind="lowpass", cutoff=100.0, order=5),
    MitigationConfig(kind="lowpass", cutoff=50.0, order=5),
)

SWEEP_COLUMNS = ("kind", "mitigation", "bandwidth_hz", "accuracy", "axes")
TIMING_COLUMNS = ("mitigation", "runtime_s", "rss_delta_mb")


@dataclass(frozen=True)
class ModelSection:
    """Sensor preset selection.

    Attributes:
        profile: One of PROFILES.
        seed: Seed of the preset's random layout.
        rate: Nominal sensor rate in Hz.
        device: Optional DEVICE_RATES key; overrides rate.
    """

    profile: str = "resonant"
    seed: int = 0
    rate: float = 400.0
    device: str | None = None

    def __post_init__(self) -> None:
        if self.profile not in PROFILES:
            raise ConfigError(f"Unknown profile {self.profile!r}; choose from {PROFILES}")
        if self.device is not None and self.device not in DEVICE_RATES:
            raise ConfigError(
                f"Unknown device {self.device!r}; choose from {sorted(DEVICE_RATES)}"
            )
        if self.rate <= 0:
            raise ConfigError(f"model rate must be positive, got {self.rate}")


@dataclass(frozen=True)
class DatasetSection:
    """Recording protocol."""

    reps_per_tone: int = 50
    duration: float = 0.5
    amplitude: float = 1.0
    master_seed: int = 0
    test_fraction: float = 0.2

    def __post_init__(self) -> None:
        if self.reps_per_tone < 1:
            raise ConfigError(f"reps_per_tone must be >= 1, got {self.reps_per_tone}")
        if self.duration <= 0 or self.amplitude <= 0:
            raise ConfigError("duration and amplitude must be positive")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must be in (0, 1), got {self.test_fraction}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete harness configuration.

    Attributes:
        model: Sensor preset.
        dataset: Recording protocol.
        mitigations: Sweep grid; each entry is one sweep cell.
        windowing: Feature frame geometry.
        classifier: Boosting hyperparameters.
        validation_fraction: Share of the training split held out for axis
            selection.
        fixed_model: Train once on unmitigated data and reuse that model for
            every sweep cell.
        jobs: Worker threads.
        output_dir: Directory results are written to.
    """

    model: ModelSection = field(default_factory=ModelSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    mitigations: tuple[MitigationConfig, ...] = DEFAULT_SWEEP_GRID
    windowing: WindowingParams = field(default_factory=WindowingParams)
    classifier: GbtHyperparams = field(default_factory=GbtHyperparams)
    validation_fraction: float = 0.25
    fixed_model: bool = False
    jobs: int = 1
    output_dir: str = "toneleak-out"

    def __post_init__(self) -> None:
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError(
                f"validation_fraction must be in (0, 1), got {self.validation_fraction}"
            )
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if not self.output_dir:
            raise ConfigError("output_dir must not be empty")
        labels = [m.label() for m in self.mitigations]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"mitigation grid lists a cell twice: {labels}")


@dataclass(frozen=True)
class SweepRow:
    """One sweep cell outcome."""

    kind: str
    mitigation: str
    bandwidth_hz: float
    accuracy: float
    axes: tuple[str, ...]

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= 1.0:
            raise InvalidArgumentError(f"accuracy must be in [0, 1], got {self.accuracy}")

    def as_record(self) -> tuple[str, ...]:
        return (
            self.kind,
            self.mitigation,
            repr(float(self.bandwidth_hz)),
            repr(float(self.accuracy)),
            "+".join(self.axes),
        )


@dataclass(frozen=True)
class CellTiming:
    """Resource use of one sweep cell."""

    mitigation: str
    runtime_s: float
    rss_delta_mb: float

    def as_record(self) -> tuple[str, ...]:
        return (self.mitigation, f"{self.runtime_s:.3f}", f"{self.rss_delta_mb:.2f}")


@dataclass(frozen=True)
class SweepResult:
    """All sweep rows, in grid order, plus their timings."""

    rows: tuple[SweepRow, ...] = ()
    timings: tuple[CellTiming, ...] = ()

    def __post_init__(self) -> None:
        labels = [row.mitigation for row in self.rows]
        if len(set(labels)) != len(labels):
            raise InvalidArgumentError(f"duplicate sweep cells: {labels}")

    def accuracy_of(self, mitigation: str) -> float:
        for row in self.rows:
            if row.mitigation == mitigation:
                return row.accuracy
        raise KeyError(mitigation)
