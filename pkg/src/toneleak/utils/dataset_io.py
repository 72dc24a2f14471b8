"""CSV and JSON file formats.

Recordings, datasets, signals, feature matrices, filters, models, evaluation
reports, and harness tables all round-trip through plain text so every artifact
can be inspected by hand. Floats in numeric tables are written with 17
significant digits and read back bit-exact.

Recording file layout:

    # rate=400.0 label=5 seed=123 model=resonant duration=0.5
    t,ax,ay,az,gx,gy,gz
    0,0.01,...
"""

import csv
import io
import json
import logging
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

from toneleak.exceptions import DataError, InvalidArgumentError, ToneLeakError
from toneleak.models.classifier import AxisSelection, EvalReport, TreeEnsembleModel
from toneleak.models.dtmf import ALL_TONES, ToneId, ToneTable
from toneleak.models.experiment import (
    SWEEP_COLUMNS,
    TIMING_COLUMNS,
    SweepResult,
)
from toneleak.models.mitigation import FilterSpec, SamplingPlan
from toneleak.models.sampling import DiscreteSignal
from toneleak.models.sensor_sim import AXIS_NAMES, Dataset, Recording, RecordingMeta

logger = logging.getLogger(__name__)

DATASET_FORMAT = "toneleak-dataset"
DATASET_VERSION = 1
MANIFEST_NAME = "manifest.json"
RECORDINGS_DIR = "recordings"
REPORT_SUMMARY_ROW = "all"

_FLOAT_FMT = "%.17g"


def _parse_comment(line: str, path: Path) -> dict[str, str]:
    if not line.startswith("#"):
        raise DataError(f"{path}: missing '# key=value' header line")
    fields = {}
    for token in line[1:].split():
        key, sep, value = token.partition("=")
        if not sep:
            raise DataError(f"{path}: malformed header token {token!r}")
        fields[key] = value
    return fields


def _read_lines(path: Path) -> list[str]:
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataError(f"Cannot read {path}: {e}") from e


def _load_table(lines: Sequence[str], path: Path, n_cols: int) -> npt.NDArray[np.float64]:
    try:
        table = np.loadtxt(io.StringIO("\n".join(lines)), delimiter=",", ndmin=2)
    except ValueError as e:
        raise DataError(f"{path}: malformed numeric table: {e}") from e
    if table.shape[0] == 0 or table.shape[1] != n_cols:
        raise DataError(f"{path}: expected {n_cols} columns, got shape {table.shape}")
    return table


def _save_table(
    path: Path, table: npt.ArrayLike, header_lines: Sequence[str]
) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        for line in header_lines:
            f.write(line + "\n")
        np.savetxt(f, np.asarray(table), fmt=_FLOAT_FMT, delimiter=",")


def _write_rows(path: Path, fieldnames: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(fieldnames)
        writer.writerows(rows)


def _write_json(path: Path, doc: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise DataError(f"Cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"{path} is not valid JSON: {e}") from e


# Recordings


def write_recording_csv(path: str | Path, rec: Recording) -> None:
    """Write one recording as CSV with a provenance header line."""
    header = (
        f"# rate={rec.rate!r} label={rec.label.symbol} seed={rec.meta.seed} "
        f"model={rec.meta.model_id} duration={rec.meta.duration!r}"
    )
    table = np.column_stack([rec.axes[0].times, rec.as_matrix()])
    _save_table(Path(path), table, [header, ",".join(("t",) + AXIS_NAMES)])


def read_recording_csv(path: str | Path) -> Recording:
    """Read a recording written by write_recording_csv.

    Raises:
        DataError: If the file is missing or malformed.
    """
    csv_path = Path(path)
    lines = _read_lines(csv_path)
    if len(lines) < 3:
        raise DataError(f"{csv_path}: recording file has no samples")
    meta = _parse_comment(lines[0], csv_path)
    if lines[1].strip() != ",".join(("t",) + AXIS_NAMES):
        raise DataError(f"{csv_path}: unexpected column header {lines[1]!r}")

    table = _load_table(lines[2:], csv_path, 1 + len(AXIS_NAMES))
    try:
        rate = float(meta["rate"])
        label = ToneId.parse(meta["label"])
        provenance = RecordingMeta(
            model_id=meta.get("model", "unknown"),
            seed=int(meta["seed"]),
            duration=float(meta.get("duration", table.shape[0] / rate)),
        )
        axes = tuple(
            DiscreteSignal(samples=table[:, i + 1], rate=rate, start_time=float(table[0, 0]))
            for i in range(len(AXIS_NAMES))
        )
        return Recording(label=label, axes=axes, meta=provenance)
    except KeyError as e:
        raise DataError(f"{csv_path}: header lacks {e}") from e
    except (ToneLeakError, ValueError) as e:
        raise DataError(f"{csv_path}: {e}") from e


def write_signal_csv(path: str | Path, sig: DiscreteSignal) -> None:
    """Write a DiscreteSignal as (time, value) columns with its rate in a header."""
    table = np.column_stack([sig.times, sig.samples])
    _save_table(Path(path), table, [f"# rate={sig.rate!r}", "t,value"])


def read_signal_csv(path: str | Path) -> DiscreteSignal:
    csv_path = Path(path)
    lines = _read_lines(csv_path)
    if len(lines) < 3:
        raise DataError(f"{csv_path}: signal file has no samples")
    meta = _parse_comment(lines[0], csv_path)
    table = _load_table(lines[2:], csv_path, 2)
    try:
        return DiscreteSignal(
            samples=table[:, 1], rate=float(meta["rate"]), start_time=float(table[0, 0])
        )
    except (KeyError, ValueError) as e:
        raise DataError(f"{csv_path}: {e}") from e


# Datasets


def _recording_name(index: int) -> str:
    return f"{RECORDINGS_DIR}/rec_{index:05d}.csv"


def build_manifest(
    dataset: Dataset, provenance: Mapping[str, Any], mitigations: Sequence[Mapping[str, Any]] = ()
) -> dict[str, Any]:
    """Manifest document of a dataset (no timestamps, so reruns hash equal)."""
    return {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "provenance": dict(provenance),
        "rate": dataset.recordings[0].rate if dataset.recordings else None,
        "mitigations": [dict(m) for m in mitigations],
        "recordings": [
            {"file": _recording_name(i), "label": rec.label.symbol, "seed": rec.meta.seed}
            for i, rec in enumerate(dataset.recordings)
        ],
        "train": list(dataset.train_indices),
        "test": list(dataset.test_indices),
    }


def write_manifest(directory: str | Path, manifest: Mapping[str, Any]) -> Path:
    path = Path(directory) / MANIFEST_NAME
    _write_json(path, manifest)
    return path


def read_manifest(directory: str | Path) -> dict[str, Any]:
    """Read and structurally validate a dataset manifest.

    Raises:
        DataError: If the manifest is missing, malformed, or references
            recordings that do not exist.
    """
    root = Path(directory)
    manifest = _read_json(root / MANIFEST_NAME)
    if not isinstance(manifest, dict) or manifest.get("format") != DATASET_FORMAT:
        raise DataError(f"{root}: not a {DATASET_FORMAT} manifest")
    if manifest.get("version") != DATASET_VERSION:
        raise DataError(f"{root}: unsupported manifest version {manifest.get('version')!r}")
    for key in ("recordings", "train", "test", "mitigations"):
        if not isinstance(manifest.get(key), list):
            raise DataError(f"{root}: manifest field {key!r} missing or not a list")
    missing = [e["file"] for e in manifest["recordings"] if not (root / e["file"]).is_file()]
    if missing:
        raise DataError(f"{root}: {len(missing)} recordings missing, first {missing[0]}")
    return manifest


def save_dataset(
    dataset: Dataset,
    directory: str | Path,
    provenance: Mapping[str, Any],
    mitigations: Sequence[Mapping[str, Any]] = (),
) -> Path:
    """Write every recording plus the manifest; returns the manifest path."""
    root = Path(directory)
    for i, rec in enumerate(dataset.recordings):
        write_recording_csv(root / _recording_name(i), rec)
        logger.debug("Wrote recording %d (%s)", i, rec.label.symbol)
    path = write_manifest(root, build_manifest(dataset, provenance, mitigations))
    logger.info("Saved %d recordings to %s", len(dataset.recordings), root)
    return path


def load_dataset(directory: str | Path) -> tuple[Dataset, dict[str, Any]]:
    """Load a dataset directory.

    Returns:
        (Dataset, manifest document).

    Raises:
        DataError: On missing files, label mismatches, or an invalid split.
    """
    root = Path(directory)
    manifest = read_manifest(root)
    recordings = []
    for entry in manifest["recordings"]:
        rec = read_recording_csv(root / entry["file"])
        if rec.label.symbol != entry["label"]:
            raise DataError(
                f"{entry['file']}: label {rec.label.symbol} disagrees with manifest "
                f"{entry['label']}"
            )
        recordings.append(rec)
    if recordings and len({rec.rate for rec in recordings}) != 1:
        raise DataError(f"{root}: recordings have mixed sampling rates")
    try:
        dataset = Dataset(
            recordings=tuple(recordings),
            train_indices=tuple(int(i) for i in manifest["train"]),
            test_indices=tuple(int(i) for i in manifest["test"]),
        )
    except InvalidArgumentError as e:
        raise DataError(f"{root}: invalid split: {e}") from e
    logger.info("Loaded %d recordings from %s", len(recordings), root)
    return dataset, manifest


# Features, filters, models


def write_feature_matrix_csv(
    path: str | Path, X: npt.ArrayLike, labels: Sequence[ToneId]
) -> None:
    """One row per recording; the final column is the label symbol."""
    matrix = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if matrix.shape[0] != len(labels):
        raise InvalidArgumentError("one label per feature row required")
    header = [f"f{i}" for i in range(matrix.shape[1])] + ["label"]
    rows = [
        [_FLOAT_FMT % v for v in row] + [label.symbol]
        for row, label in zip(matrix, labels, strict=True)
    ]
    _write_rows(Path(path), header, rows)


def read_feature_matrix_csv(path: str | Path) -> tuple[npt.NDArray[np.float64], list[ToneId]]:
    csv_path = Path(path)
    try:
        with csv_path.open(encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise DataError(f"Cannot read {csv_path}: {e}") from e
    if not rows or rows[0][-1] != "label":
        raise DataError(f"{csv_path}: not a feature matrix")
    try:
        X = np.array([[float(v) for v in row[:-1]] for row in rows[1:]], dtype=np.float64)
        labels = [ToneId.parse(row[-1]) for row in rows[1:]]
    except (ToneLeakError, ValueError) as e:
        raise DataError(f"{csv_path}: {e}") from e
    return X.reshape(len(labels), len(rows[0]) - 1), labels


def write_filter_csv(path: str | Path, spec: FilterSpec) -> None:
    """Dump SOS coefficients, one section per row."""
    cutoffs = ";".join(repr(float(c)) for c in spec.cutoffs) or "-"
    header = (
        f"# kind={spec.kind} order={spec.order} cutoffs={cutoffs} "
        f"design_rate={spec.design_rate!r}"
    )
    _save_table(Path(path), spec.sos, [header, "b0,b1,b2,a0,a1,a2"])


def save_model(path: str | Path, model: TreeEnsembleModel) -> None:
    _write_json(Path(path), model.to_dict())
    logger.debug("Saved model (%d rounds) to %s", model.n_rounds, path)


def load_model(path: str | Path) -> TreeEnsembleModel:
    """Read a model JSON document.

    Raises:
        DataError: If the document is unreadable or of an unsupported version.
    """
    doc = _read_json(Path(path))
    try:
        return TreeEnsembleModel.from_dict(doc)
    except (ToneLeakError, KeyError, TypeError, ValueError) as e:
        raise DataError(f"{path}: invalid model document: {e}") from e


def write_tone_table_json(path: str | Path, table: ToneTable) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(table.to_json() + "\n", encoding="utf-8")


# Reports and harness tables


def write_report_csv(path: str | Path, report: EvalReport) -> None:
    """EvalReport as one row per true tone with its confusion counts.

    A closing "all" row carries the test-set size, the overall accuracy and the
    number of predictions per tone. The "#" tone is an ordinary row, so the file
    has no comment lines.
    """
    rows: list[list[Any]] = [
        [
            tone.symbol,
            int(report.support[i]),
            repr(float(report.per_class_accuracy[i])),
            *(int(c) for c in report.confusion[i]),
        ]
        for i, tone in enumerate(ALL_TONES)
    ]
    rows.append(
        [
            REPORT_SUMMARY_ROW,
            report.total,
            repr(float(report.accuracy)),
            *(int(c) for c in report.confusion.sum(axis=0)),
        ]
    )
    fieldnames = ["tone", "support", "class_accuracy", *(t.symbol for t in ALL_TONES)]
    _write_rows(Path(path), fieldnames, rows)


def write_axis_selection_csv(path: str | Path, selection: AxisSelection) -> None:
    """Validation accuracy of every candidate subset, in evaluation order."""
    rows = [
        ["+".join(axes), repr(float(acc)), int(axes == selection.axes)]
        for axes, acc in selection.accuracies.items()
    ]
    _write_rows(Path(path), ["axes", "validation_accuracy", "selected"], rows)


def write_sweep_csv(path: str | Path, result: SweepResult) -> None:
    _write_rows(Path(path), SWEEP_COLUMNS, [row.as_record() for row in result.rows])


def write_timing_csv(path: str | Path, result: SweepResult) -> None:
    _write_rows(Path(path), TIMING_COLUMNS, [t.as_record() for t in result.timings])


def write_plan_csv(path: str | Path, plan: SamplingPlan) -> None:
    rows = [
        [repr(rate), count, int(rate == plan.best_rate)] for rate, count in plan.table
    ]
    _write_rows(Path(path), ["rate_hz", "attenuable", "best"], rows)
