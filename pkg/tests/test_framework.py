from dataclasses import replace

import pytest
import yaml

from autoadv.analysis.report import load_report, report_to_dict, strip_timing
from autoadv.core.classifier import default_classifier
from autoadv.core.config import ExperimentConfig
from autoadv.core.data_loader import save_model
from autoadv.core.exceptions import ContractError, DimensionError, ShortfallError
from autoadv.core.framework import (ExperimentFramework, cmd_ablate, cmd_attack, cmd_calibrate, cmd_encoders,
                                    cmd_report, cmd_speed, cmd_train, select_tasks)
from autoadv.methods.ablation import VARIANTS


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("framework")
    config = ExperimentConfig(model=str(root / "model.aadv"), out=str(root / "out"), seed=1, dataset_size=200,
                              image_size=8, contrast=0.6, epochs=5, accuracy_floor=0.0, count=3, iterations=5,
                              quiet=True)
    history = cmd_train(config)
    return config, history


def with_out(config, tmp_path, **changes):
    return replace(config, out=str(tmp_path / "out"), **changes)


class TestTrainAndSelect:
    """
    Training the model and choosing images and targets.
    """
    def test_train_writes_model(self, trained):
        config, history = trained
        assert len(history.epochs) == 5
        model, dataset = ExperimentFramework(config).load_checked_model()
        assert model.input_shape == (8, 8, 1)
        assert len(dataset) == 200

    def test_targets_differ_from_labels(self, trained):
        config, _ = trained
        _, tasks = ExperimentFramework(config).tasks(5)
        assert [t.image_id for t in tasks] == sorted(t.image_id for t in tasks)
        assert all(t.target != t.label for t in tasks)
        assert all(0 <= t.target < 10 for t in tasks)

    def test_smaller_count_is_a_subset(self, trained):
        config, _ = trained
        model, dataset = ExperimentFramework(config).load_checked_model()
        small = {t.image_id for t in select_tasks(model, dataset, 2, config.seed)}
        large = {t.image_id for t in select_tasks(model, dataset, 6, config.seed)}
        assert small <= large

    def test_shortfall(self, trained):
        config, _ = trained
        with pytest.raises(ShortfallError):
            ExperimentFramework(config).tasks(10_000)

    def test_model_below_floor(self, trained, tmp_path):
        config, _ = trained
        path = tmp_path / "untrained.aadv"
        save_model(default_classifier(0, (8, 8, 1), 10), path)
        with pytest.raises(ContractError):
            ExperimentFramework(replace(config, model=str(path), accuracy_floor=0.99)).tasks()


class TestAttackCommand:
    """
    The attack subcommand and its report file.
    """
    def test_report_written(self, trained, tmp_path):
        config, _ = trained
        report = cmd_attack(with_out(config, tmp_path))
        stored = load_report(tmp_path / "out" / "attack_report.yaml")
        assert stored.image_ids == report.image_ids
        assert len(report.image_ids) == 3
        assert report.sections[0].name == "full"
        assert report.sections[0].aggregates.attempted == 3
        assert stored.config["iterations"] == 5
        assert not report.truncated

    def test_reproducible_apart_from_timing(self, trained, tmp_path):
        config = with_out(trained[0], tmp_path)
        path = tmp_path / "out" / "attack_report.yaml"
        cmd_attack(config)
        first = strip_timing(yaml.safe_load(path.read_text()))
        cmd_attack(config)
        assert strip_timing(yaml.safe_load(path.read_text())) == first

    def test_zero_images(self, trained, tmp_path):
        report = cmd_attack(with_out(trained[0], tmp_path, count=0))
        assert report.image_ids == []
        assert report.sections[0].aggregates.asr is None

    def test_dump_images(self, trained, tmp_path):
        report = cmd_attack(with_out(trained[0], tmp_path, dump_images=True, count=1))
        image_id = report.image_ids[0]
        folder = tmp_path / "out" / "images"
        for kind in ("orig", "adv", "diff", "mask"):
            assert (folder / f"img_{image_id:05d}_{kind}.pgm").exists()

    def test_failed_dump_still_flushes_a_truncated_report(self, trained, tmp_path):
        config = with_out(trained[0], tmp_path, model=str(tmp_path / "two_channel.aadv"), channels=2,
                          dataset_size=100, epochs=2, count=1, dump_images=True)
        cmd_train(config)
        with pytest.raises(DimensionError):
            cmd_attack(config)
        stored = load_report(tmp_path / "out" / "attack_report.yaml")
        assert stored.truncated
        assert len(stored.image_ids) == 1

    def test_pretty_print(self, trained, tmp_path):
        cmd_attack(with_out(trained[0], tmp_path))
        text = cmd_report(tmp_path / "out" / "attack_report.yaml")
        assert text.startswith("attack report")

    def test_stored_report_replays_same_images(self, trained, tmp_path):
        config = with_out(trained[0], tmp_path)
        report = cmd_attack(config)
        replayed = ExperimentConfig(**load_report(tmp_path / "out" / "attack_report.yaml").config)
        assert replayed == config
        assert report_to_dict(cmd_attack(replayed))["image_ids"] == report.image_ids


class TestComparisonCommands:
    """
    Ablation, encoder comparison, calibration and timing.
    """
    def test_ablate_runs_all_variants(self, trained, tmp_path):
        report = cmd_ablate(with_out(trained[0], tmp_path, count=2))
        assert [s.name for s in report.sections] == list(VARIANTS)
        assert all(s.aggregates.attempted == 2 for s in report.sections)
        assert [row["variant"] for row in report.comparison] == list(VARIANTS)
        assert set(report.checks) == {"asr_order_holds", "l0_order_holds", "asr_gap_full_random"}
        assert (tmp_path / "out" / "ablation_report.yaml").exists()

    def test_encoders(self, trained, tmp_path):
        report = cmd_encoders(with_out(trained[0], tmp_path, count=2))
        assert [s.name for s in report.sections] == ["fc", "conv"]
        assert set(report.checks) == {"l0_spread", "l0_within_tolerance"}

    def test_calibrate(self, trained, tmp_path):
        result = cmd_calibrate(with_out(trained[0], tmp_path, calibrate_count=1, calibrate_candidates=[10.0, 100.0]))
        stored = yaml.safe_load((tmp_path / "out" / "calibration.yaml").read_text())
        assert stored["alpha_end"] == result.alpha_end
        assert len(stored["image_ids"]) == 1

    def test_speed(self, trained, tmp_path):
        config = with_out(trained[0], tmp_path, speed_sizes=[8, 10], speed_count=1, dataset_size=100)
        summary = cmd_speed(config)
        assert set(summary["seconds"]) == {8, 10}
        assert summary["growth_rate"] == pytest.approx(
            100 * (summary["seconds"][10] - summary["seconds"][8]) / summary["seconds"][8], abs=0.01)

    def test_speed_needs_two_sizes(self, trained, tmp_path):
        with pytest.raises(ContractError):
            cmd_speed(with_out(trained[0], tmp_path, speed_sizes=[8]))
