"""
Pytest configuration and shared fixtures.
"""

from pathlib import Path

import pytest

from toneleak.models.classifier import GbtHyperparams
from toneleak.models.experiment import DatasetSection, ExperimentConfig, ModelSection
from toneleak.models.features import WindowingParams
from toneleak.models.sampling import SamplingConfig
from toneleak.models.sensor_sim import (
    NUM_AXES,
    AxisResponse,
    Dataset,
    SensorModel,
    generate_dataset,
    make_default_model,
)


@pytest.fixture
def temp_dir(tmp_path: Path) -> Path:
    """Temporary directory for test outputs."""
    return tmp_path


@pytest.fixture
def silent_model() -> SensorModel:
    """Flat unit gains, no harmonics, no noise, 400 Hz."""
    return SensorModel(
        axes=tuple(AxisResponse() for _ in range(NUM_AXES)),
        noise_std=(0.0,) * NUM_AXES,
        harmonic_gains=(),
        cfg=SamplingConfig(400.0),
        model_id="silent",
    )


@pytest.fixture
def flat_model() -> SensorModel:
    return make_default_model("flat", seed=0)


@pytest.fixture
def small_dataset(flat_model: SensorModel) -> Dataset:
    """5 reps per tone of 0.25 s flat-preset recordings (80 recordings)."""
    return generate_dataset(flat_model, reps_per_tone=5, duration=0.25, master_seed=7)


@pytest.fixture
def quick_hp() -> GbtHyperparams:
    """Few boosting rounds and a small child weight for tiny datasets."""
    return GbtHyperparams(n_rounds=5, min_child_weight=0.1, rng_seed=3)


@pytest.fixture
def quick_config(temp_dir: Path) -> ExperimentConfig:
    """Small flat-preset experiment writing under temp_dir."""
    return ExperimentConfig(
        model=ModelSection(profile="flat", seed=0),
        dataset=DatasetSection(reps_per_tone=5, duration=0.25, master_seed=11),
        mitigations=(),
        windowing=WindowingParams(frame_size=50, frame_step=10),
        classifier=GbtHyperparams(n_rounds=4, min_child_weight=0.1, rng_seed=1),
        output_dir=str(temp_dir / "out"),
    )
