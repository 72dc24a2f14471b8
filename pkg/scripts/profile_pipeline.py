"""Stage-by-stage profile of the toneleak attack pipeline.

This script measures, on a scaled-down recording protocol:
- Dataset generation time
- Feature extraction time
- Training time (one full-axis model)
- Evaluation time
- Resident memory after each stage

It can also dump the per-axis frequency response of the sensor preset as CSV.

Usage:
    uv run python scripts/profile_pipeline.py [--reps 10] [--rounds 20]
    uv run python scripts/profile_pipeline.py --probe-csv response.csv
"""

import argparse
import csv
import gc
import logging
import sys
from pathlib import Path
from typing import Any

import numpy as np

from toneleak.models.classifier import GbtHyperparams, evaluate, train_matrix
from toneleak.models.features import WindowingParams, extract_matrix
from toneleak.models.sensor_sim import (
    AXIS_NAMES,
    PROFILES,
    generate_dataset,
    make_default_model,
    probe_axis_response,
)
from toneleak.utils.resource_monitor import ResourceMonitor

# Configure logging
logging.basicConfig(level=logging.INFO, format="%(levelname)s - %(message)s")
logger = logging.getLogger(__name__)


def profile(profile_name: str, reps: int, rounds: int, jobs: int) -> dict[str, Any]:
    """Run each pipeline stage once under the resource monitor.

    Returns:
        Dictionary with per-stage timings, memory, and the test accuracy.
    """
    monitor = ResourceMonitor()
    gc.collect()
    start_mb = monitor.get_current_usage()

    with monitor.measure("generate"):
        model = make_default_model(profile_name, seed=0)
        dataset = generate_dataset(model, reps, 0.5, master_seed=0, jobs=jobs)

    with monitor.measure("features"):
        X = extract_matrix(dataset.recordings, AXIS_NAMES, WindowingParams(), jobs=jobs)
        y = np.array([rec.label.index for rec in dataset.recordings])

    train_idx = np.array(dataset.train_indices)
    test_idx = np.array(dataset.test_indices)
    hp = GbtHyperparams(n_rounds=rounds, n_jobs=jobs)
    with monitor.measure("train"):
        ensemble = train_matrix(X[train_idx], y[train_idx], hp, axes=AXIS_NAMES)

    with monitor.measure("evaluate"):
        report = evaluate(ensemble, X[test_idx], y[test_idx])

    return {
        "profile": profile_name,
        "recordings": len(dataset.recordings),
        "features": X.shape[1],
        "start_mb": start_mb,
        "stages": monitor.stages,
        "accuracy": report.accuracy,
    }


def write_probe_csv(path: Path, profile_name: str) -> None:
    """Per-axis gain of the preset across the 420-580 Hz chirp band."""
    model = make_default_model(profile_name, seed=0)
    freqs, gains = probe_axis_response(model, 420.0, 580.0)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["frequency_hz", *AXIS_NAMES])
        for freq, row in zip(freqs, gains, strict=True):
            writer.writerow([f"{freq:.6g}", *(f"{g:.6g}" for g in row)])
    logger.info("Axis response written to %s", path)


def generate_report(results: dict[str, Any]) -> str:
    """Format profiling results as text."""
    report = ["=" * 60, "TONELEAK PIPELINE PROFILE", "=" * 60, ""]
    report.append(f"Profile: {results['profile']}")
    report.append(f"Recordings: {results['recordings']}")
    report.append(f"Feature length: {results['features']}")
    report.append(f"Memory at start: {results['start_mb']:.1f} MB")
    report.append("")
    for stage in results["stages"]:
        report.append(
            f"{stage.name:<10} {stage.runtime_s:>8.2f} s  "
            f"{stage.rss_delta_mb:>+8.1f} MB  (peak {stage.peak_rss_mb:.1f} MB)"
        )
    report.append("")
    report.append(f"Test accuracy: {results['accuracy']:.4f}")
    return "\n".join(report)


def main() -> None:
    """Main profiling function."""
    parser = argparse.ArgumentParser(description="Profile the toneleak pipeline")
    parser.add_argument("--profile", choices=PROFILES, default="resonant")
    parser.add_argument("--reps", type=int, default=10, help="Recordings per tone")
    parser.add_argument("--rounds", type=int, default=20, help="Boosting rounds")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--probe-csv", type=Path, help="Also write the axis response CSV")
    parser.add_argument("--output", "-o", help="Output file for report (default: stdout)")
    args = parser.parse_args()

    if args.reps < 2:
        logger.error("--reps must be at least 2 for a train/test split")
        sys.exit(1)

    if args.probe_csv:
        write_probe_csv(args.probe_csv, args.profile)

    logger.info("Profiling %s preset with %d reps per tone", args.profile, args.reps)
    report = generate_report(profile(args.profile, args.reps, args.rounds, args.jobs))

    if args.output:
        output_path = Path(args.output)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        output_path.write_text(report)
        logger.info("Report written to: %s", args.output)
    else:
        print(report)


if __name__ == "__main__":
    main()
