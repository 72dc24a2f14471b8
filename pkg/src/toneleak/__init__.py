"""
toneleak

Simulation, mitigation and classification of touchtone leakage through
smartphone motion sensors.
"""

from toneleak.exceptions import (
    AmbiguousToneError,
    ConfigError,
    DataError,
    DegenerateTrainingError,
    FeatureLengthError,
    InvalidArgumentError,
    RecordingTooShortError,
    ToneLeakError,
)
from toneleak.models.dtmf import DTMF_TABLE, ToneId

__version__ = "0.1.0"

__all__ = [
    "DTMF_TABLE",
    "AmbiguousToneError",
    "ConfigError",
    "DataError",
    "DegenerateTrainingError",
    "FeatureLengthError",
    "InvalidArgumentError",
    "RecordingTooShortError",
    "ToneId",
    "ToneLeakError",
    "__version__",
]
