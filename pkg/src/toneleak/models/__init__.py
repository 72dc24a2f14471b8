"""
Models package - Domain types and signal-processing logic.

This package contains:
- Touchtone synthesis and the aliasing arithmetic
- The simulated sensor channel and datasets
- Mitigations, feature extraction, and the boosted-tree classifier
- Experiment configuration types
"""
