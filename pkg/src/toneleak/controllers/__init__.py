"""
Controllers package - Orchestration of experiments.

This package contains:
- Experiment controller (dataset generation, mitigation, training, sweeps)
"""

from toneleak.controllers.experiment_controller import ExperimentController

__all__ = ["ExperimentController"]
