"""Tests for ExperimentController."""

import csv
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from toneleak.controllers.experiment_controller import ExperimentController
from toneleak.exceptions import DataError, InvalidArgumentError, RecordingTooShortError
from toneleak.models.classifier import evaluate, train_matrix
from toneleak.models.dtmf import DTMF_FREQUENCIES
from toneleak.models.experiment import ExperimentConfig
from toneleak.models.features import WindowingParams, extract, extract_matrix
from toneleak.models.mitigation import MitigationConfig, mitigate_downsample
from toneleak.models.sensor_sim import Dataset
from toneleak.utils.dataset_io import (
    MANIFEST_NAME,
    REPORT_SUMMARY_ROW,
    load_dataset,
    load_model,
    read_manifest,
)
from toneleak.utils.settings import load_experiment_config

DOWNSAMPLE_GRID = tuple(MitigationConfig(kind="downsample", factor=n) for n in (1, 2, 4, 8))


@pytest.fixture
def controller(quick_config: ExperimentConfig) -> ExperimentController:
    return ExperimentController(quick_config)


@pytest.fixture
def dataset_dir(controller: ExperimentController, temp_dir: Path) -> Path:
    return controller.cmd_gen(temp_dir / "dataset")


def report_accuracy(path: Path) -> float:
    with path.open(encoding="utf-8", newline="") as f:
        summary = list(csv.reader(f))[-1]
    assert summary[0] == REPORT_SUMMARY_ROW
    return float(summary[2])


class TestCmdGen:
    """Tests for dataset generation."""

    def test_writes_recordings_and_manifest(self, dataset_dir: Path):
        """Test 16 tones x 5 reps produce 80 recording files."""
        assert len(list((dataset_dir / "recordings").glob("*.csv"))) == 80
        manifest = read_manifest(dataset_dir)
        assert len(manifest["recordings"]) == 80
        assert manifest["provenance"]["model"]["profile"] == "flat"
        assert manifest["mitigations"] == []

    def test_same_seed_same_manifest(self, controller: ExperimentController, temp_dir: Path):
        """Test a rerun with the same seeds writes a byte-identical manifest."""
        a = controller.cmd_gen(temp_dir / "a")
        b = controller.cmd_gen(temp_dir / "b")
        assert (a / MANIFEST_NAME).read_bytes() == (b / MANIFEST_NAME).read_bytes()
        assert (a / "recordings" / "rec_00042.csv").read_bytes() == (
            b / "recordings" / "rec_00042.csv"
        ).read_bytes()

    def test_default_location(self, controller: ExperimentController, quick_config):
        """Test the dataset lands under output_dir when no directory is given."""
        path = controller.cmd_gen()
        assert path == Path(quick_config.output_dir) / "dataset"
        assert (path / MANIFEST_NAME).is_file()


class TestCmdMitigate:
    """Tests for applying a mitigation to a dataset directory."""

    def test_none_copies_bytes(
        self, controller: ExperimentController, dataset_dir: Path, temp_dir: Path
    ):
        """Test kind none copies every recording byte for byte."""
        out = controller.cmd_mitigate(dataset_dir, MitigationConfig(), temp_dir / "copy")
        for source in (dataset_dir / "recordings").glob("*.csv"):
            assert (out / "recordings" / source.name).read_bytes() == source.read_bytes()
        assert read_manifest(out)["mitigations"] == [MitigationConfig().to_dict()]

    def test_downsample_rates(
        self, controller: ExperimentController, dataset_dir: Path, temp_dir: Path
    ):
        """Test downsampling by 4 leaves every recording at 100 Hz."""
        out = controller.cmd_mitigate(
            dataset_dir, MitigationConfig(kind="downsample", factor=4), temp_dir / "ds4"
        )
        dataset, manifest = load_dataset(out)
        assert {rec.rate for rec in dataset.recordings} == {100.0}
        assert manifest["rate"] == 100.0

    def test_chain_is_recorded(
        self, controller: ExperimentController, dataset_dir: Path, temp_dir: Path
    ):
        """Test successive mitigations append to the manifest chain in order."""
        first = MitigationConfig(kind="downsample", factor=2)
        second = MitigationConfig(kind="lowpass", cutoff=50.0)
        mid = controller.cmd_mitigate(dataset_dir, first, temp_dir / "mid")
        out = controller.cmd_mitigate(mid, second, temp_dir / "out")
        assert read_manifest(out)["mitigations"] == [first.to_dict(), second.to_dict()]

    def test_split_preserved(
        self, controller: ExperimentController, dataset_dir: Path, temp_dir: Path
    ):
        """Test mitigated datasets keep the train/test split."""
        original, _ = load_dataset(dataset_dir)
        out = controller.cmd_mitigate(
            dataset_dir, MitigationConfig(kind="lowpass", cutoff=100.0), temp_dir / "lp"
        )
        mitigated, _ = load_dataset(out)
        assert mitigated.train_indices == original.train_indices
        assert mitigated.test_indices == original.test_indices

    def test_antialias_non_multiple_rate(
        self, controller: ExperimentController, dataset_dir: Path, temp_dir: Path
    ):
        """Test anti-aliasing to a rate that does not divide the capture rate fails."""
        cell = MitigationConfig(kind="antialias", cutoff=100.0, order=8, target_rate=300.0)
        with pytest.raises(InvalidArgumentError, match="integer multiple"):
            controller.cmd_mitigate(dataset_dir, cell, temp_dir / "aa")

    def test_same_directory_rejected(
        self, controller: ExperimentController, dataset_dir: Path
    ):
        """Test a dataset cannot be mitigated in place."""
        with pytest.raises(DataError, match="different directory"):
            controller.cmd_mitigate(dataset_dir, MitigationConfig(), dataset_dir)

    def test_missing_source(self, controller: ExperimentController, temp_dir: Path):
        """Test a missing source dataset raises DataError."""
        with pytest.raises(DataError):
            controller.cmd_mitigate(temp_dir / "absent", MitigationConfig(), temp_dir / "out")


class TestCmdTrainEval:
    """Tests for the attack pipeline on a dataset directory."""

    def test_writes_outputs(
        self, controller: ExperimentController, dataset_dir: Path, temp_dir: Path
    ):
        """Test report, axis selection, model and effective config are written."""
        out = temp_dir / "te"
        result = controller.cmd_train_eval(dataset_dir, out)
        for name in ("report.csv", "axis_selection.csv", "model.json", "config.json"):
            assert (out / name).is_file()
        assert report_accuracy(out / "report.csv") == result.report.accuracy
        assert load_model(out / "model.json").axes == result.selection.axes
        assert load_experiment_config(out / "config.json") == controller.config

    def test_report_covers_test_split(
        self, controller: ExperimentController, dataset_dir: Path, temp_dir: Path
    ):
        """Test the report counts exactly the test recordings."""
        result = controller.cmd_train_eval(dataset_dir, temp_dir / "te")
        dataset, _ = load_dataset(dataset_dir)
        assert result.report.total == len(dataset.test_indices)
        assert 0.0 <= result.report.accuracy <= 1.0

    def test_selection_beats_single_axes(
        self, controller: ExperimentController, dataset_dir: Path, temp_dir: Path
    ):
        """Test the chosen subset is at least as good as every single axis."""
        selection = controller.cmd_train_eval(dataset_dir, temp_dir / "te").selection
        singles = [acc for axes, acc in selection.accuracies.items() if len(axes) == 1]
        assert len(singles) == 6
        assert len(selection.accuracies) == 11
        assert selection.validation_accuracy >= max(singles)

    def test_deterministic(
        self, controller: ExperimentController, dataset_dir: Path, temp_dir: Path
    ):
        """Test two runs with the same seeds write identical reports."""
        controller.cmd_train_eval(dataset_dir, temp_dir / "a")
        controller.cmd_train_eval(dataset_dir, temp_dir / "b")
        for name in ("report.csv", "axis_selection.csv", "model.json"):
            assert (temp_dir / "a" / name).read_bytes() == (temp_dir / "b" / name).read_bytes()

    def test_loss_non_increasing(
        self, controller: ExperimentController, dataset_dir: Path, temp_dir: Path
    ):
        """Test the final model's training log-loss never rises."""
        model = controller.cmd_train_eval(dataset_dir, temp_dir / "te").model
        assert len(model.loss_history) == controller.config.classifier.n_rounds + 1
        assert model.loss_is_monotone()


class TestCmdSweep:
    """Tests for the mitigation sweep."""

    def test_downsample_bandwidths(self, quick_config: ExperimentConfig, temp_dir: Path):
        """Test one row per cell with bandwidths 200, 100, 50, 25 Hz."""
        config = replace(quick_config, mitigations=DOWNSAMPLE_GRID)
        result = ExperimentController(config).cmd_sweep(temp_dir / "sweep")
        assert [row.bandwidth_hz for row in result.rows] == [200.0, 100.0, 50.0, 25.0]
        assert [row.kind for row in result.rows] == ["downsample"] * 4
        assert all(0.0 <= row.accuracy <= 1.0 for row in result.rows)
        assert len(result.timings) == 4
        assert (temp_dir / "sweep" / "sweep_timing.csv").is_file()
        assert len(list((temp_dir / "sweep" / "cells").iterdir())) == 4

    def test_deterministic_csv(self, quick_config: ExperimentConfig, temp_dir: Path):
        """Test identical configs give byte-identical sweep.csv."""
        config = replace(
            quick_config,
            mitigations=(
                MitigationConfig(kind="downsample", factor=2),
                MitigationConfig(kind="lowpass", cutoff=100.0),
            ),
        )
        ExperimentController(config).cmd_sweep(temp_dir / "a")
        ExperimentController(config).cmd_sweep(temp_dir / "b")
        assert (temp_dir / "a" / "sweep.csv").read_bytes() == (
            temp_dir / "b" / "sweep.csv"
        ).read_bytes()

    def test_empty_grid(self, controller: ExperimentController, temp_dir: Path):
        """Test an empty grid writes a header-only CSV."""
        result = controller.cmd_sweep(temp_dir / "sweep")
        assert result.rows == ()
        assert (temp_dir / "sweep" / "sweep.csv").read_text(encoding="utf-8") == (
            "kind,mitigation,bandwidth_hz,accuracy,axes\n"
        )

    def test_short_recordings_shrink_frames(
        self, quick_config: ExperimentConfig, temp_dir: Path, caplog
    ):
        """Test cells whose recordings are shorter than a frame still run."""
        config = replace(quick_config, mitigations=(MitigationConfig(kind="downsample", factor=8),))
        with caplog.at_level(logging.WARNING):
            result = ExperimentController(config).cmd_sweep(temp_dir / "sweep")
        assert len(result.rows) == 1
        assert "fewer than frame_size" in caplog.text

    def test_fixed_model(self, quick_config: ExperimentConfig, temp_dir: Path):
        """Test the fixed model scores the unmitigated cell like its baseline."""
        config = replace(
            quick_config,
            fixed_model=True,
            mitigations=(
                MitigationConfig(),
                MitigationConfig(kind="downsample", factor=2),
            ),
        )
        controller = ExperimentController(config)
        result = controller.cmd_sweep(temp_dir / "sweep")
        baseline = temp_dir / "sweep" / "baseline"
        assert (baseline / "model.json").is_file()
        assert result.rows[0].accuracy == report_accuracy(baseline / "report.csv")
        model = load_model(baseline / "model.json")
        assert all(row.axes == model.axes for row in result.rows)

        # Rescore the downsampled cell on hand-built, per-axis padded features
        dataset = controller.build_dataset()
        params = controller.windowing_for(dataset)
        widths = {a: extract_matrix(dataset.recordings, (a,), params).shape[1] for a in model.axes}
        test = [mitigate_downsample(rec, 2) for rec in dataset.test]
        X = np.hstack(
            [extract_matrix(test, (a,), params, target_len=widths[a]) for a in model.axes]
        )
        y = np.array([rec.label.index for rec in test], dtype=np.intp)
        expected = evaluate(model, X, y)
        assert result.rows[1].accuracy == expected.accuracy
        assert report_accuracy(temp_dir / "sweep" / "cells" / "01_downsample" / "report.csv") == (
            expected.accuracy
        )

    def test_fixed_model_too_short(self, quick_config: ExperimentConfig, temp_dir: Path):
        """Test the fixed model cannot frame recordings shorter than its window."""
        config = replace(
            quick_config,
            fixed_model=True,
            mitigations=(MitigationConfig(kind="downsample", factor=8),),
        )
        with pytest.raises(RecordingTooShortError):
            ExperimentController(config).cmd_sweep(temp_dir / "sweep")


class TestCmdPlan:
    """Tests for the sampling-rate planner command."""

    def test_dtmf_table(self, controller: ExperimentController, temp_dir: Path):
        """Test counts (0, 2, 6) with 1600 Hz best for f_c = 180 Hz."""
        plan = controller.cmd_plan(180.0, [400.0, 800.0, 1600.0], out_dir=temp_dir)
        assert plan.table == ((400.0, 0), (800.0, 2), (1600.0, 6))
        assert plan.best_rate == 1600.0
        assert (temp_dir / "plan.csv").is_file()

    def test_single_candidate(self, controller: ExperimentController, temp_dir: Path):
        """Test a single candidate gives a single row."""
        plan = controller.cmd_plan(180.0, [800.0], out_dir=temp_dir)
        assert len(plan.table) == 1
        assert plan.best_rate == 800.0

    def test_zero_cutoff(self, controller: ExperimentController, temp_dir: Path):
        """Test f_c = 0 counts every non-zero alias."""
        plan = controller.cmd_plan(0.0, [400.0], DTMF_FREQUENCIES, out_dir=temp_dir)
        assert plan.table == ((400.0, 8),)


class TestRunAttack:
    """Tests for the in-memory attack pipeline."""

    def test_windowing_unchanged_for_long_recordings(
        self, controller: ExperimentController, small_dataset: Dataset
    ):
        """Test the configured frame geometry is kept when recordings fit."""
        assert controller.windowing_for(small_dataset) == controller.config.windowing

    def test_windowing_shrinks(self, quick_config: ExperimentConfig, small_dataset: Dataset):
        """Test a frame longer than the recordings shrinks to their length."""
        config = replace(quick_config, windowing=WindowingParams(frame_size=400, frame_step=100))
        params = ExperimentController(config).windowing_for(small_dataset)
        assert params == WindowingParams(frame_size=100, frame_step=100)

    def test_empty_dataset(self, controller: ExperimentController):
        """Test an empty dataset raises DataError."""
        with pytest.raises(DataError, match="no recordings"):
            controller.run_attack(Dataset(recordings=(), train_indices=(), test_indices=()))

    def test_jobs_do_not_change_results(
        self, quick_config: ExperimentConfig, small_dataset: Dataset
    ):
        """Test threaded feature extraction and training match the serial run."""
        serial = ExperimentController(quick_config).run_attack(small_dataset)
        threaded = ExperimentController(replace(quick_config, jobs=3)).run_attack(small_dataset)
        np.testing.assert_array_equal(serial.report.confusion, threaded.report.confusion)
        assert serial.selection.axes == threaded.selection.axes

    def test_fixed_model_matrix_keeps_training_layout(
        self, controller: ExperimentController, small_dataset: Dataset
    ):
        """Test shortened recordings fill each axis block at its training offset."""
        baseline = controller.run_attack(small_dataset)
        params = baseline.windowing
        axes = ("ax", "gy")
        blocks = {a: extract_matrix(small_dataset.recordings, (a,), params) for a in axes}
        y = np.array([rec.label.index for rec in small_dataset.recordings], dtype=np.intp)
        model = train_matrix(np.hstack([blocks[a] for a in axes]), y, baseline.model.hyperparams, axes)
        two_axis = replace(baseline, model=model)

        unmitigated = controller.fixed_model_matrix(two_axis, small_dataset.recordings)
        np.testing.assert_array_equal(unmitigated, np.hstack([blocks[a] for a in axes]))

        halved = [mitigate_downsample(rec, 2) for rec in small_dataset.test]
        X = controller.fixed_model_matrix(two_axis, halved)
        width = blocks["ax"].shape[1]
        assert X.shape == (len(halved), 2 * width)
        for k, axis in enumerate(axes):
            for row, rec in zip(X, halved, strict=True):
                values = extract(rec, (axis,), params).values
                block = row[k * width : (k + 1) * width]
                np.testing.assert_array_equal(block[: values.size], values)
                assert not np.any(block[values.size :])
        assert np.any(X[:, width:])
