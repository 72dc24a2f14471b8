"""
Utils package - Shared utilities.

This package contains:
- Experiment configuration persistence
- CSV / JSON file formats
- Seeded random streams
- Process resource monitoring
"""
