import logging
from pathlib import Path

import numpy as np
import yaml

from ..analysis.comparison import ablation_checks, comparison_rows, encoder_checks
from ..analysis.metrics import growth_rate
from ..analysis.report import ReportSection, RunReport, emit_report, load_report, pretty_report
from ..methods.ablation import run_ablation, run_encoders
from ..methods.learned_mask import LearnedMaskAttack, CalibrationResult, calibrate_alpha_end
from ..visualization.images import dump_images
from .classifier import ClassifierModel, TrainingHistory, default_classifier, evaluate_accuracy, predict_batch, train
from .config import ExperimentConfig
from .data_loader import generate_synthetic, load_dataset, load_model, save_model
from .exceptions import ContractError, ShortfallError
from .models import VAL, AttackTask, Dataset
from .pipeline import BatchOutcome, Pipeline
from .seeding import derive_seed, stream

logger = logging.getLogger(__name__)

ACCURACY_MARGIN = 0.05


def select_tasks(model: ClassifierModel, dataset: Dataset, count: int, seed: int) -> list[AttackTask]:
    """
    Picks ``count`` correctly classified validation images and a random wrong target for each.

    Image ids are indices into ``dataset``. The candidates are permuted with the
    ``images`` stream and a prefix is taken, so a larger count extends a smaller
    one. Targets and attack seeds are drawn per image id.

    Raises:
        ShortfallError: If fewer than ``count`` candidates exist.
    """
    val_ids = np.flatnonzero(dataset.splits == VAL)
    if val_ids.size:
        predictions = np.argmax(predict_batch(model, dataset.images[val_ids]), axis=1)
        correct = val_ids[predictions == dataset.labels[val_ids]]
    else:
        correct = val_ids
    if count > correct.size:
        raise ShortfallError(count, int(correct.size))

    chosen = np.sort(stream(seed, "images").permutation(correct)[:count])
    tasks = []
    for image_id in chosen:
        image_id = int(image_id)
        label = int(dataset.labels[image_id])
        target = int(stream(seed, "targets", image_id).integers(0, dataset.num_classes - 1))
        if target >= label:
            target += 1
        tasks.append(AttackTask(image_id, dataset.images[image_id], label, target,
                                derive_seed(seed, "attack", image_id)))
    return tasks


class ExperimentFramework:
    """
    Main entry point behind every subcommand.

    Ties together dataset generation, model training and loading, task
    selection, the batch pipeline and report emission for one resolved
    ExperimentConfig.
    """

    def __init__(self, config: ExperimentConfig | None = None):
        self.config = (config or ExperimentConfig()).validate()
        self.out = Path(self.config.out)

    @property
    def progress(self) -> bool:
        return not self.config.quiet

    def dataset_for(self, input_shape: tuple[int, int, int], num_classes: int) -> Dataset:
        cfg = self.config
        if cfg.dataset:
            dataset = load_dataset(cfg.dataset)
            if dataset.image_shape != tuple(input_shape):
                raise ContractError(f"dataset images {dataset.image_shape} do not fit model input {input_shape}")
            return dataset
        h, w, c = input_shape
        return generate_synthetic(cfg.seed, cfg.dataset_size, w=w, h=h, c=c, num_classes=num_classes,
                                  noise=cfg.noise, contrast=cfg.contrast)

    def train(self) -> tuple[ClassifierModel, TrainingHistory]:
        cfg = self.config
        shape = (cfg.image_size, cfg.image_size, cfg.channels)
        dataset = self.dataset_for(shape, cfg.num_classes)
        logger.info("Training on %d images of shape %s", len(dataset.train), shape)
        model, history = train(default_classifier(cfg.seed, shape, cfg.num_classes), dataset,
                               cfg.epochs, cfg.lr, cfg.train_momentum, cfg.seed, cfg.batch_size)
        save_model(model, cfg.model)
        logger.info("Model written to %s; final val accuracy %s", cfg.model, history.final_val_accuracy)
        return model, history

    def load_checked_model(self) -> tuple[ClassifierModel, Dataset]:
        """Load the model and its dataset, refusing models below the accuracy floor."""
        cfg = self.config
        model = load_model(cfg.model)
        dataset = self.dataset_for(model.input_shape, model.num_classes)
        val = dataset.val
        accuracy = evaluate_accuracy(model, val.images, val.labels)
        if accuracy is not None:
            if accuracy < cfg.accuracy_floor:
                raise ContractError(f"model val accuracy {accuracy:.3f} is below the floor {cfg.accuracy_floor}")
            if accuracy < cfg.accuracy_floor + ACCURACY_MARGIN:
                logger.warning("model val accuracy %.3f is close to the floor %.2f", accuracy, cfg.accuracy_floor)
        logger.info("Loaded %s (checksum %s..., val accuracy %s)", cfg.model, model.checksum()[:12], accuracy)
        return model, dataset

    def tasks(self, count: int | None = None) -> tuple[ClassifierModel, list[AttackTask]]:
        model, dataset = self.load_checked_model()
        count = self.config.count if count is None else count
        return model, select_tasks(model, dataset, count, self.config.seed)

    def _report(self, command: str, tasks: list[AttackTask], sections: list[ReportSection],
                truncated: bool, comparison=None, checks=None) -> RunReport:
        return RunReport(
            command=command,
            config=self.config.to_dict(),
            image_ids=[t.image_id for t in tasks],
            sections=sections,
            truncated=truncated,
            comparison=comparison or [],
            checks=checks or {},
        )

    def _finish(self, report: RunReport, name: str, error=None) -> RunReport:
        emit_report(report, self.out / name)
        if error is not None:
            raise error
        return report

    def attack(self) -> RunReport:
        model, tasks = self.tasks()
        outcome = Pipeline(LearnedMaskAttack(self.config.to_attack_config()), self.config.workers,
                           self.progress).run(model, tasks)
        report = self._report("attack", tasks, [ReportSection("full", outcome.records)], outcome.truncated)
        if self.config.dump_images:
            try:
                self.dump(tasks, outcome)
            except Exception as exc:
                logger.error("image dump failed: %s", exc)
                report.truncated = True
                return self._finish(report, "attack_report.yaml", exc)
        agg = report.sections[0].aggregates
        logger.info("ASR %s over %d images, mean l0 %s", agg.asr, agg.attempted, agg.mean_l0)
        return self._finish(report, "attack_report.yaml", outcome.error)

    def dump(self, tasks: list[AttackTask], outcome: BatchOutcome) -> None:
        folder = self.out / "images"
        for task in tasks:
            result = outcome.results.get(task.image_id)
            if result is not None:
                dump_images(task.image, result.x_adv, result.hard_mask, folder / f"img_{task.image_id:05d}")

    def ablate(self) -> RunReport:
        model, tasks = self.tasks()
        run = run_ablation(model, tasks, self.config.to_attack_config(), self.config.l1_lambda,
                           self.config.random_k, self.config.workers, self.progress)
        rows = comparison_rows(run.sections)
        report = self._report("ablate", tasks, run.sections, run.truncated, rows, ablation_checks(rows))
        return self._finish(report, "ablation_report.yaml", run.error)

    def encoders(self) -> RunReport:
        model, tasks = self.tasks()
        run = run_encoders(model, tasks, self.config.to_attack_config(), workers=self.config.workers,
                           progress=self.progress)
        rows = comparison_rows(run.sections)
        report = self._report("encoders", tasks, run.sections, run.truncated, rows, encoder_checks(rows))
        return self._finish(report, "encoders_report.yaml", run.error)

    def calibrate(self) -> CalibrationResult:
        cfg = self.config
        model, tasks = self.tasks(cfg.calibrate_count)
        result = calibrate_alpha_end(model, [t.image for t in tasks], [t.target for t in tasks],
                                     cfg.calibrate_candidates, cfg.to_attack_config())
        if result.alpha_end is None:
            logger.warning("no candidate alpha_end binarized every run: %s", result.binarized_fraction)
        self._write_yaml("calibration.yaml", {
            "alpha_end": result.alpha_end,
            "binarized_fraction": {float(k): float(v) for k, v in result.binarized_fraction.items()},
            "image_ids": [t.image_id for t in tasks],
        })
        return result

    def speed(self) -> dict:
        """Mean per-image attack time at two image sizes and the growth between them."""
        cfg = self.config
        if len(cfg.speed_sizes) < 2:
            raise ContractError("speed needs at least two image sizes")
        timings = {}
        for size in cfg.speed_sizes:
            shape = (size, size, cfg.channels)
            dataset = generate_synthetic(cfg.seed, cfg.dataset_size, w=size, h=size, c=cfg.channels,
                                         num_classes=cfg.num_classes, noise=cfg.noise, contrast=cfg.contrast)
            model, _ = train(default_classifier(cfg.seed, shape, cfg.num_classes), dataset,
                             cfg.epochs, cfg.lr, cfg.train_momentum, cfg.seed, cfg.batch_size)
            tasks = select_tasks(model, dataset, cfg.speed_count, cfg.seed)
            outcome = Pipeline(LearnedMaskAttack(cfg.to_attack_config()), 1, self.progress).run(model, tasks)
            if outcome.error is not None:
                raise outcome.error
            timings[int(size)] = float(np.mean([r.seconds for r in outcome.records])) if outcome.records else 0.0
            logger.info("size %dx%d: %.3fs per image", size, size, timings[int(size)])
        small, large = cfg.speed_sizes[0], cfg.speed_sizes[-1]
        summary = {"seconds": timings, "growth_rate": growth_rate(timings[small], timings[large])}
        self._write_yaml("speed.yaml", summary)
        return summary

    def _write_yaml(self, name: str, data: dict) -> Path:
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(data, sort_keys=False))
        logger.info("Wrote %s", path)
        return path


def cmd_train(config: ExperimentConfig) -> TrainingHistory:
    return ExperimentFramework(config).train()[1]


def cmd_attack(config: ExperimentConfig) -> RunReport:
    return ExperimentFramework(config).attack()


def cmd_ablate(config: ExperimentConfig) -> RunReport:
    return ExperimentFramework(config).ablate()


def cmd_encoders(config: ExperimentConfig) -> RunReport:
    return ExperimentFramework(config).encoders()


def cmd_calibrate(config: ExperimentConfig) -> CalibrationResult:
    return ExperimentFramework(config).calibrate()


def cmd_speed(config: ExperimentConfig) -> dict:
    return ExperimentFramework(config).speed()


def cmd_report(path: str | Path) -> str:
    return pretty_report(load_report(path))
