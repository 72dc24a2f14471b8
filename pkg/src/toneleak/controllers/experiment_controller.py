"""Experiment controller orchestrating the attack and mitigation pipeline.

This module provides the ExperimentController class, which coordinates dataset
generation, mitigation, feature extraction, axis selection, training and
evaluation, and writes every result to the output directory. Each public
cmd_* method backs one CLI subcommand.
"""

import logging
import shutil
from collections.abc import Sequence
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import numpy.typing as npt

from toneleak.exceptions import DataError, RecordingTooShortError
from toneleak.models.classifier import (
    AxisSelection,
    EvalReport,
    GbtHyperparams,
    TreeEnsembleModel,
    evaluate,
    select_axes,
    train_matrix,
)
from toneleak.models.dtmf import DTMF_FREQUENCIES
from toneleak.models.experiment import CellTiming, ExperimentConfig, SweepResult, SweepRow
from toneleak.models.features import WindowingParams, extract_matrix
from toneleak.models.mitigation import (
    MitigationConfig,
    SamplingPlan,
    apply_mitigation,
    plan_sampling_rate,
)
from toneleak.models.sensor_sim import (
    AXIS_NAMES,
    Dataset,
    Recording,
    generate_dataset,
    make_default_model,
    stratified_split,
)
from toneleak.utils.dataset_io import (
    load_dataset,
    read_manifest,
    save_dataset,
    save_model,
    write_axis_selection_csv,
    write_manifest,
    write_plan_csv,
    write_report_csv,
    write_sweep_csv,
    write_timing_csv,
)
from toneleak.utils.random_streams import make_rng
from toneleak.utils.resource_monitor import ResourceMonitor
from toneleak.utils.settings import save_experiment_config

logger = logging.getLogger(__name__)

# Random stream of the axis-selection validation split (streams 0-2 belong to
# dataset generation)
_STREAM_VALIDATION = 3


@dataclass(frozen=True)
class TrainEvalResult:
    """Outcome of one attack run on a dataset.

    Attributes:
        report: Test-split evaluation of the final model.
        selection: Axis selection on the training split.
        model: Final model trained on the whole training split.
        windowing: Frame geometry actually used.
    """

    report: EvalReport
    selection: AxisSelection
    model: TreeEnsembleModel
    windowing: WindowingParams


class ExperimentController:
    """Controller for running toneleak experiments.

    Args:
        config: Experiment configuration.
        monitor: Resource monitor for sweep cells (created when omitted).

    Example:
        >>> controller = ExperimentController(ExperimentConfig())
        >>> dataset_dir = controller.cmd_gen()
        >>> result = controller.cmd_train_eval(dataset_dir)
        >>> print(f"{result.report.accuracy:.1%} on {result.selection.axes}")
    """

    def __init__(self, config: ExperimentConfig, monitor: ResourceMonitor | None = None) -> None:
        self._config = config
        self._monitor = monitor or ResourceMonitor()
        logger.debug("ExperimentController initialized (output_dir=%s)", config.output_dir)

    @property
    def config(self) -> ExperimentConfig:
        return self._config

    def _out(self, out_dir: str | Path | None, default: str) -> Path:
        path = Path(out_dir) if out_dir is not None else Path(self._config.output_dir) / default
        path.mkdir(parents=True, exist_ok=True)
        return path

    @property
    def _hyperparams(self) -> GbtHyperparams:
        return replace(self._config.classifier, n_jobs=self._config.jobs)

    def _provenance(self) -> dict[str, object]:
        return {"model": asdict(self._config.model), "dataset": asdict(self._config.dataset)}

    def build_dataset(self) -> Dataset:
        """Generate the configured dataset in memory."""
        model_cfg = self._config.model
        data_cfg = self._config.dataset
        sensor = make_default_model(
            model_cfg.profile, model_cfg.seed, nominal_rate=model_cfg.rate, device=model_cfg.device
        )
        return generate_dataset(
            sensor,
            reps_per_tone=data_cfg.reps_per_tone,
            duration=data_cfg.duration,
            master_seed=data_cfg.master_seed,
            amplitude=data_cfg.amplitude,
            test_fraction=data_cfg.test_fraction,
            jobs=self._config.jobs,
        )

    def cmd_gen(self, out_dir: str | Path | None = None) -> Path:
        """Generate a dataset directory of CSV recordings plus a JSON manifest.

        Returns:
            The dataset directory.
        """
        target = self._out(out_dir, "dataset")
        dataset = self.build_dataset()
        save_dataset(dataset, target, self._provenance())
        logger.info("Dataset of %d recordings written to %s", len(dataset.recordings), target)
        return target

    def cmd_mitigate(
        self, dataset_dir: str | Path, mitigation: MitigationConfig, out_dir: str | Path
    ) -> Path:
        """Apply one mitigation to every recording of a dataset directory.

        The new manifest appends the mitigation to the recorded chain. With
        kind "none" recording files are copied byte for byte.

        Returns:
            The new dataset directory.

        Raises:
            DataError: If the source dataset is missing or malformed.
            InvalidArgumentError: If the mitigation does not fit the data.
        """
        source = Path(dataset_dir)
        target = Path(out_dir)
        if target.resolve() == source.resolve():
            raise DataError("mitigated dataset must go to a different directory")

        if mitigation.kind == "none":
            manifest = read_manifest(source)
            for entry in manifest["recordings"]:
                destination = target / entry["file"]
                destination.parent.mkdir(parents=True, exist_ok=True)
                shutil.copyfile(source / entry["file"], destination)
            manifest["mitigations"] = [*manifest["mitigations"], mitigation.to_dict()]
            write_manifest(target, manifest)
        else:
            dataset, manifest = load_dataset(source)
            mitigated = dataset.map_recordings(lambda rec: apply_mitigation(rec, mitigation))
            save_dataset(
                mitigated,
                target,
                manifest.get("provenance", {}),
                [*manifest["mitigations"], mitigation.to_dict()],
            )
        logger.info("Applied %s to %s -> %s", mitigation.label(), source, target)
        return target

    def cmd_train_eval(
        self, dataset_dir: str | Path, out_dir: str | Path | None = None
    ) -> TrainEvalResult:
        """Select axes, train, and evaluate on a dataset directory.

        Writes report.csv, axis_selection.csv, model.json and the effective
        config.json to the output directory.
        """
        target = self._out(out_dir, "train-eval")
        dataset, _ = load_dataset(dataset_dir)
        result = self.run_attack(dataset)
        self._write_attack(target, result)
        save_experiment_config(self._config, target / "config.json")
        logger.info(
            "Accuracy %.4f with axes %s (%s)",
            result.report.accuracy,
            ",".join(result.selection.axes),
            target,
        )
        return result

    def cmd_sweep(self, out_dir: str | Path | None = None) -> SweepResult:
        """Run every configured mitigation against the configured dataset.

        Each cell mitigates all recordings (training and test alike) and, unless
        fixed_model is set, retrains the attacker on the mitigated data. Writes
        sweep.csv (deterministic) and sweep_timing.csv, plus per-cell reports
        under cells/.
        """
        target = self._out(out_dir, "sweep")
        save_experiment_config(self._config, target / "config.json")
        dataset = self.build_dataset()
        base_rate = dataset.recordings[0].rate

        baseline: TrainEvalResult | None = None
        if self._config.fixed_model:
            with self._monitor.measure("baseline"):
                baseline = self.run_attack(dataset)
            self._write_attack(target / "baseline", baseline)

        rows: list[SweepRow] = []
        timings: list[CellTiming] = []
        for index, cell in enumerate(self._config.mitigations):
            label = cell.label()
            with self._monitor.measure(label) as usage:
                mitigated = dataset.map_recordings(
                    lambda rec, cell=cell: apply_mitigation(rec, cell)
                )
                if baseline is None:
                    result = self.run_attack(mitigated)
                    self._write_attack(target / "cells" / f"{index:02d}_{cell.kind}", result)
                    report, axes = result.report, result.selection.axes
                else:
                    report = self._evaluate_fixed(baseline, mitigated)
                    write_report_csv(
                        target / "cells" / f"{index:02d}_{cell.kind}" / "report.csv", report
                    )
                    axes = baseline.model.axes

            rows.append(
                SweepRow(
                    kind=cell.kind,
                    mitigation=label,
                    bandwidth_hz=cell.bandwidth(base_rate),
                    accuracy=report.accuracy,
                    axes=axes,
                )
            )
            timings.append(CellTiming(label, usage.runtime_s, usage.rss_delta_mb))
            logger.info(
                "Sweep cell %d/%d %s: accuracy %.4f (%.1f s)",
                index + 1,
                len(self._config.mitigations),
                label,
                report.accuracy,
                usage.runtime_s,
            )

        result = SweepResult(rows=tuple(rows), timings=tuple(timings))
        write_sweep_csv(target / "sweep.csv", result)
        write_timing_csv(target / "sweep_timing.csv", result)
        logger.info("Sweep of %d cells written to %s", len(rows), target)
        return result

    def cmd_plan(
        self,
        f_c: float,
        candidates: Sequence[float],
        sensitive: Sequence[float] = DTMF_FREQUENCIES,
        out_dir: str | Path | None = None,
    ) -> SamplingPlan:
        """Tabulate attenuable aliases per candidate rate into plan.csv."""
        target = self._out(out_dir, "plan")
        plan = plan_sampling_rate(sensitive, f_c, candidates)
        write_plan_csv(target / "plan.csv", plan)
        logger.info("Sampling plan at f_c=%g Hz: best rate %s", f_c, plan.best_rate)
        return plan

    def windowing_for(self, dataset: Dataset) -> WindowingParams:
        """Configured frame geometry, shrunk to fit the shortest recording.

        Raises:
            RecordingTooShortError: If a recording has fewer than 2 samples.
        """
        params = self._config.windowing
        shortest = min(rec.n_samples for rec in dataset.recordings)
        if shortest >= params.frame_size:
            return params
        if shortest < 2:
            raise RecordingTooShortError(f"recordings of {shortest} samples cannot be framed")
        logger.warning(
            "Recordings have %d samples, fewer than frame_size %d; using one frame of %d",
            shortest,
            params.frame_size,
            shortest,
        )
        return WindowingParams(frame_size=shortest, frame_step=min(params.frame_step, shortest))

    def run_attack(self, dataset: Dataset) -> TrainEvalResult:
        """Axis selection, final training and test evaluation on one dataset."""
        if not dataset.recordings:
            raise DataError("dataset has no recordings")
        params = self.windowing_for(dataset)
        hp = self._hyperparams
        jobs = self._config.jobs

        per_axis = {
            axis: extract_matrix(dataset.recordings, (axis,), params, jobs=jobs)
            for axis in AXIS_NAMES
        }
        y = np.array([rec.label.index for rec in dataset.recordings], dtype=np.intp)
        train_idx = np.array(dataset.train_indices, dtype=np.intp)
        test_idx = np.array(dataset.test_indices, dtype=np.intp)

        fit_pos, val_pos = stratified_split(
            [dataset.recordings[i].label for i in train_idx],
            self._config.validation_fraction,
            make_rng(self._config.dataset.master_seed, _STREAM_VALIDATION),
        )
        fit_idx = train_idx[list(fit_pos)]
        val_idx = train_idx[list(val_pos)]
        logger.info(
            "Axis selection on %d fit / %d validation recordings", fit_idx.size, val_idx.size
        )

        selection = select_axes(
            {a: m[fit_idx] for a, m in per_axis.items()},
            y[fit_idx],
            {a: m[val_idx] for a, m in per_axis.items()},
            y[val_idx],
            hp,
        )

        def stack(rows: npt.NDArray[np.intp]) -> npt.NDArray[np.float64]:
            return np.hstack([per_axis[a][rows] for a in selection.axes])

        model = train_matrix(stack(train_idx), y[train_idx], hp, axes=selection.axes)
        report = evaluate(model, stack(test_idx), y[test_idx])
        return TrainEvalResult(report=report, selection=selection, model=model, windowing=params)

    def fixed_model_matrix(
        self, baseline: TrainEvalResult, recordings: Sequence[Recording]
    ) -> npt.NDArray[np.float64]:
        """Features of recordings laid out the way the baseline model was trained.

        Each axis block is padded to its training width on its own, then the
        blocks are stacked in model.axes order, matching run_attack.

        Raises:
            RecordingTooShortError: If a recording no longer fits one frame.
        """
        model = baseline.model
        width = model.feature_count // len(model.axes)
        return np.hstack(
            [
                extract_matrix(
                    recordings,
                    (axis,),
                    baseline.windowing,
                    target_len=width,
                    jobs=self._config.jobs,
                )
                for axis in model.axes
            ]
        )

    def _evaluate_fixed(self, baseline: TrainEvalResult, mitigated: Dataset) -> EvalReport:
        test = mitigated.test
        X = self.fixed_model_matrix(baseline, test)
        y = np.array([rec.label.index for rec in test], dtype=np.intp)
        return evaluate(baseline.model, X, y)

    @staticmethod
    def _write_attack(target: Path, result: TrainEvalResult) -> None:
        target.mkdir(parents=True, exist_ok=True)
        write_report_csv(target / "report.csv", result.report)
        write_axis_selection_csv(target / "axis_selection.csv", result.selection)
        save_model(target / "model.json", result.model)
