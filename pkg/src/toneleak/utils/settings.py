"""Experiment configuration persistence.

This module loads and saves ExperimentConfig trees as JSON documents and
validates them on the way in. Unknown keys are rejected so that typos never
silently fall back to defaults.
"""

import json
import logging
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any

from toneleak.exceptions import ConfigError, ToneLeakError
from toneleak.models.classifier import GbtHyperparams
from toneleak.models.experiment import DatasetSection, ExperimentConfig, ModelSection
from toneleak.models.features import WindowingParams
from toneleak.models.mitigation import MitigationConfig

logger = logging.getLogger(__name__)

_SECTIONS: dict[str, type] = {
    "model": ModelSection,
    "dataset": DatasetSection,
    "windowing": WindowingParams,
    "classifier": GbtHyperparams,
}


def _check_keys(doc: dict[str, Any], allowed: set[str], where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"Unknown keys in {where}: {sorted(unknown)}")


def _build_section(cls: type, doc: Any, where: str) -> Any:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a JSON object, got {type(doc).__name__}")
    _check_keys(doc, {f.name for f in fields(cls)}, where)
    try:
        return cls(**doc)
    except ConfigError:
        raise
    except (ToneLeakError, TypeError, ValueError) as e:
        raise ConfigError(f"Invalid {where}: {e}") from e


def config_from_dict(doc: dict[str, Any]) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from a parsed JSON document.

    Args:
        doc: Parsed configuration; missing keys take their defaults.

    Returns:
        Validated ExperimentConfig.

    Raises:
        ConfigError: On unknown keys, wrong types, or invalid values.
    """
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    _check_keys(doc, {f.name for f in fields(ExperimentConfig)}, "configuration")

    values: dict[str, Any] = {}
    for key, cls in _SECTIONS.items():
        if key in doc:
            values[key] = _build_section(cls, doc[key], key)

    if "mitigations" in doc:
        if not isinstance(doc["mitigations"], list):
            raise ConfigError("mitigations must be a JSON list")
        grid = []
        for i, entry in enumerate(doc["mitigations"]):
            if not isinstance(entry, dict):
                raise ConfigError(f"mitigations[{i}] must be a JSON object")
            try:
                grid.append(MitigationConfig.from_dict(entry))
            except (ToneLeakError, TypeError, ValueError) as e:
                raise ConfigError(f"Invalid mitigations[{i}]: {e}") from e
        values["mitigations"] = tuple(grid)

    for key in ("validation_fraction", "fixed_model", "jobs", "output_dir"):
        if key in doc:
            values[key] = doc[key]

    try:
        return ExperimentConfig(**values)
    except ConfigError:
        raise
    except (ToneLeakError, TypeError, ValueError) as e:
        raise ConfigError(f"Invalid configuration: {e}") from e


def config_to_dict(config: ExperimentConfig) -> dict[str, Any]:
    """JSON-ready document that config_from_dict reads back unchanged."""
    doc = {key: asdict(getattr(config, key)) for key in _SECTIONS}
    doc["mitigations"] = [m.to_dict() for m in config.mitigations]
    doc["validation_fraction"] = config.validation_fraction
    doc["fixed_model"] = config.fixed_model
    doc["jobs"] = config.jobs
    doc["output_dir"] = config.output_dir
    return doc


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    """Load an experiment configuration from a JSON file.

    Raises:
        ConfigError: If the file is unreadable, not JSON, or invalid.
    """
    config_path = Path(path)
    try:
        doc = json.loads(config_path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"Cannot read config {config_path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config {config_path} is not valid JSON: {e}") from e

    config = config_from_dict(doc)
    logger.info("Loaded experiment config from %s", config_path)
    return config


def save_experiment_config(config: ExperimentConfig, path: str | Path) -> None:
    """Write a configuration as indented, key-sorted JSON."""
    config_path = Path(path)
    config_path.parent.mkdir(parents=True, exist_ok=True)
    config_path.write_text(
        json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.debug("Saved experiment config to %s", config_path)
