from dataclasses import replace

import numpy as np
import pytest

from autoadv.core.autodiff import Graph
from autoadv.core.classifier import ClassifierModel, LayerSpec, linear_classifier, predict_class
from autoadv.core.exceptions import ConfigError, ContractError, DegenerateGradientError
from autoadv.core.models import AttackConfig
from autoadv.methods.learned_mask import (LearnedMaskAttack, NoEncoderAttack, baseline_no_encoder,
                                          calibrate_alpha_end, run_attack)
from autoadv.methods.base import MomentumTracker
from autoadv.methods.dense import (DenseAttack, L1DeltaAttack, RandomSubsetAttack, baseline_dense,
                                   baseline_l1_delta, baseline_random)
from autoadv.methods.steps import hard_threshold, is_binarized
from tests.conftest import linear_instance

EPS = 16 / 255


def fast_config(**changes) -> AttackConfig:
    return replace(AttackConfig(iterations=120, alpha_end=200.0, seed=1), **changes)


class TestLearnedMaskAttack:
    """
    The full method on the 3x3 two-class linear model.
    """
    def setup_method(self, method):
        self.model, self.x, self.target = linear_instance(0)
        self.config = fast_config()

    def test_succeeds_with_sparse_perturbation(self):
        result = run_attack(self.model, self.x, self.target, self.config)
        assert result.success
        assert result.predicted == self.target
        assert result.method == "full"
        assert 1 <= result.norms.l0 <= 9

    def test_success_matches_prediction_of_adversarial_image(self):
        result = run_attack(self.model, self.x, self.target, self.config)
        assert result.success == (predict_class(self.model, result.x_adv) == self.target)

    def test_l0_bounded_by_hard_mask(self):
        result = run_attack(self.model, self.x, self.target, self.config)
        assert result.norms.l0 <= int(result.hard_mask.sum())
        assert set(np.unique(result.hard_mask)) <= {0.0, 1.0}

    def test_linf_and_range(self):
        result = run_attack(self.model, self.x, self.target, self.config)
        assert result.norms.linf <= EPS + 1e-15
        assert result.x_adv.min() >= 0.0 and result.x_adv.max() <= 1.0
        np.testing.assert_allclose(result.perturbation, result.x_adv - self.x)

    def test_default_config_on_a_gray_image(self):
        model = linear_classifier(0)
        image = np.full(model.input_shape, 0.5)
        target = 1 - predict_class(model, image)
        result = run_attack(model, image, target, AttackConfig(epsilon=EPS, seed=0))
        assert result.target == target
        assert result.norms.linf <= EPS + 1e-15
        assert result.success == (predict_class(model, result.x_adv) == target)

    def test_trace_invariants(self):
        result = run_attack(self.model, self.x, self.target, self.config)
        trace = result.trace
        assert len(trace) == self.config.iterations == result.iterations
        assert trace[0].alpha == self.config.alpha_start
        assert all(a.alpha <= b.alpha for a, b in zip(trace, trace[1:]))
        for record in trace:
            assert record.delta_linf <= EPS
            assert self.config.c <= record.lam <= self.config.c + self.config.gamma
            assert 0.0 <= record.mask_min <= record.mask_max <= 1.0

    def test_deterministic(self):
        a = run_attack(self.model, self.x, self.target, self.config)
        b = run_attack(self.model, self.x, self.target, self.config)
        np.testing.assert_array_equal(a.x_adv, b.x_adv)
        np.testing.assert_array_equal(a.hard_mask, b.hard_mask)
        assert [r.loss for r in a.trace] == [r.loss for r in b.trace]

    def test_seed_override(self):
        attack = LearnedMaskAttack(self.config)
        a = attack.run(self.model, self.x, self.target, seed=5)
        b = LearnedMaskAttack(replace(self.config, seed=5)).run(self.model, self.x, self.target)
        np.testing.assert_array_equal(a.x_adv, b.x_adv)

    def test_zero_epsilon_is_a_no_op(self):
        result = run_attack(self.model, self.x, self.target, replace(self.config, epsilon=0.0))
        np.testing.assert_array_equal(result.x_adv, self.x)
        assert not result.success
        assert result.iterations == 0
        assert result.norms.l0 == 0

    def test_target_already_predicted(self):
        with pytest.raises(ContractError):
            run_attack(self.model, self.x, 0, self.config)

    def test_target_out_of_range(self):
        with pytest.raises(ContractError):
            run_attack(self.model, self.x, 2, self.config)

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            run_attack(self.model, self.x, self.target, replace(self.config, alpha_end=0.01))

    def test_model_is_not_modified(self):
        before = self.model.checksum()
        run_attack(self.model, self.x, self.target, self.config)
        assert self.model.checksum() == before

    def test_first_success_is_tracked(self):
        result = run_attack(self.model, self.x, self.target, replace(self.config, track_first_success=True))
        assert result.success
        assert result.first_success is not None
        assert 0 <= result.first_success < self.config.iterations

    @pytest.mark.parametrize("encoder", ["fc", "conv"])
    def test_both_encoders_give_a_hard_mask(self, encoder):
        result = run_attack(self.model, self.x, self.target, replace(self.config, encoder=encoder))
        assert set(np.unique(result.hard_mask)) <= {0.0, 1.0}
        assert result.iterations == self.config.iterations
        assert isinstance(result.binarized, bool)

    def test_encoder_input_is_normalized_by_epsilon(self):
        encoder = LearnedMaskAttack(self.config).make_encoder((3, 3, 1), self.config)
        assert encoder.spec.input_scale == pytest.approx(1 / EPS)

    def test_channel_shared_mask_is_identical_across_channels(self):
        model, x, target = linear_instance(2, channels=3)
        result = run_attack(model, x, target, replace(self.config, channel_independent=False))
        mask = result.hard_mask
        assert mask.shape == (3, 3, 3)
        np.testing.assert_array_equal(mask[:, :, 0], mask[:, :, 1])
        np.testing.assert_array_equal(mask[:, :, 0], mask[:, :, 2])


class TestNoEncoder:
    """
    The ablation feeding the perturbation itself into the scaled sigmoid.
    """
    def setup_method(self, method):
        self.model, self.x, self.target = linear_instance(1)

    def test_negative_components_are_masked_out(self):
        attack = NoEncoderAttack(fast_config())
        graph = Graph()
        delta = np.array([0.03, -0.03, 0.01, -0.01, 0.02, -0.02, 0.05, -0.05, 0.04]).reshape(3, 3, 1)
        mask, _ = attack.soft_mask(graph.constant(delta), None, None, 100.0, delta.shape)
        assert np.all(mask.value[delta < 0] < 0.5)
        assert np.all(mask.value[delta > 0] > 0.5)

    def test_channel_shared_averages_channels(self):
        attack = NoEncoderAttack(fast_config(channel_independent=False))
        graph = Graph()
        delta = np.zeros((2, 2, 2))
        delta[..., 0], delta[..., 1] = 0.04, -0.02
        mask, full = attack.soft_mask(graph.constant(delta), None, None, 1.0, delta.shape)
        assert mask.shape == (2, 2, 1)
        assert full.shape == (2, 2, 2)
        np.testing.assert_allclose(mask.value, 1 / (1 + np.exp(-0.01 / EPS)))

    def test_components_at_the_bound_binarize(self):
        attack = NoEncoderAttack(fast_config())
        delta = np.full((3, 3, 1), EPS)
        delta[0] = -EPS
        mask, _ = attack.soft_mask(Graph().constant(delta), None, None, 100.0, delta.shape)
        assert is_binarized(mask.value, 1e-3)
        np.testing.assert_array_equal(hard_threshold(mask.value), (delta > 0).astype(float))

    def test_runs_and_binarizes(self):
        result = baseline_no_encoder(self.model, self.x, self.target, fast_config())
        assert result.method == "no-encoder"
        assert result.norms.linf <= EPS + 1e-15
        assert result.norms.l0 <= int(result.hard_mask.sum())


class TestDenseBaselines:
    """
    Dense, random-subset and l1-penalized baselines.
    """
    def setup_method(self, method):
        self.model, self.x, self.target = linear_instance(4)

    def test_dense_succeeds_and_touches_most_pixels(self):
        result = baseline_dense(self.model, self.x, self.target, EPS, 60, 1.0, None, seed=0)
        assert result.success
        assert result.norms.linf <= EPS + 1e-15
        assert result.norms.l0 >= 8

    def test_random_with_all_components_equals_dense(self):
        dense = baseline_dense(self.model, self.x, self.target, EPS, 60, 1.0, None, seed=3)
        full = baseline_random(self.model, self.x, self.target, EPS, 9, 60, 1.0, None, seed=3)
        np.testing.assert_array_equal(full.x_adv, dense.x_adv)

    def test_random_subset_size_and_determinism(self):
        a = baseline_random(self.model, self.x, self.target, EPS, 3, 40, 1.0, None, seed=7)
        b = baseline_random(self.model, self.x, self.target, EPS, 3, 40, 1.0, None, seed=7)
        assert int(a.hard_mask.sum()) == 3
        assert a.norms.l0 <= 3
        np.testing.assert_array_equal(a.hard_mask, b.hard_mask)

    def test_random_needs_k_or_subset(self):
        with pytest.raises(ContractError):
            RandomSubsetAttack(fast_config())
        with pytest.raises(ContractError):
            RandomSubsetAttack(fast_config(), k=2, subset=np.ones((3, 3, 1)))

    def test_random_k_out_of_range(self):
        with pytest.raises(ContractError):
            RandomSubsetAttack(fast_config(iterations=5), k=10).run(self.model, self.x, self.target)

    def test_l1_with_zero_weight_matches_dense(self):
        dense = baseline_dense(self.model, self.x, self.target, EPS, 60, 1.0, None, seed=2)
        l1 = baseline_l1_delta(self.model, self.x, self.target, EPS, 0.0, 60, 1.0, None, seed=2)
        np.testing.assert_allclose(l1.x_adv, dense.x_adv, atol=1e-6)
        assert l1.success == dense.success

    def test_l1_zeroes_tiny_components(self):
        result = baseline_l1_delta(self.model, self.x, self.target, EPS, 50.0, 60, 1.0, None, seed=2)
        assert result.method == "l1-delta"
        assert result.norms.linf <= EPS + 1e-15
        assert result.norms.l0 <= int(result.hard_mask.sum())

    def test_l1_weight_must_be_non_negative(self):
        with pytest.raises(ContractError):
            L1DeltaAttack(fast_config(), -1.0)

    def test_stop_on_success(self):
        attack = DenseAttack(fast_config(iterations=200), stop_on_success=True)
        result = attack.run(self.model, self.x, self.target)
        assert result.success
        assert result.iterations == result.first_success + 1 < 200


class TestDegenerateGradients:
    """
    Vanishing gradients decay the momentum and eventually abort the attack.
    """
    def test_tracker_decays_momentum(self):
        tracker = MomentumTracker((2,), mu=0.5, limit=3)
        tracker.update(np.array([1.0, -1.0]), 0)
        g = tracker.update(np.zeros(2), 1)
        np.testing.assert_allclose(g, [0.25, -0.25])
        assert tracker.degenerate_steps == 1

    def test_tracker_resets_streak(self):
        tracker = MomentumTracker((1,), mu=1.0, limit=1)
        tracker.update(np.zeros(1), 0)
        tracker.update(np.ones(1), 1)
        tracker.update(np.zeros(1), 2)
        assert tracker.degenerate_steps == 2

    def test_persistent_degeneracy_aborts(self):
        flat = LayerSpec("dense", {"weight": np.zeros((9, 2)), "bias": np.array([1.0, 0.0])})
        model = ClassifierModel((3, 3, 1), 2, [flat]).freeze()
        attack = DenseAttack(fast_config(iterations=20, degenerate_limit=3))
        with pytest.raises(DegenerateGradientError):
            attack.run(model, np.full((3, 3, 1), 0.5), 1)

    def test_saturated_success_stops_instead_of_aborting(self):
        # class 1 wins by thousands of logits once every pixel moves up, so the softmax saturates
        weight = np.zeros((9, 2))
        weight[:, 1] = 1e4
        bias = np.array([1e4 * 4.5 + 1.0, 0.0])
        model = ClassifierModel((3, 3, 1), 2, [LayerSpec("dense", {"weight": weight, "bias": bias})]).freeze()
        attack = DenseAttack(fast_config(iterations=40, degenerate_limit=3))
        result = attack.run(model, np.full((3, 3, 1), 0.5), 1)
        assert result.success
        assert result.degenerate_steps == 4
        assert result.iterations < 40


class TestCalibration:
    """
    Choosing alpha_end from a few trial attacks.
    """
    def test_candidates_below_start_are_skipped(self):
        model, x, target = linear_instance(0)
        result = calibrate_alpha_end(model, [x], [target], [0.05, 1000.0], fast_config(iterations=60))
        assert set(result.binarized_fraction) <= {1000.0}
        assert result.alpha_end in (None, 1000.0)
        assert all(0.0 <= v <= 1.0 for v in result.binarized_fraction.values())

    def test_no_images(self):
        model, _, _ = linear_instance(0)
        result = calibrate_alpha_end(model, [], [], [10.0, 100.0], fast_config())
        assert result.alpha_end is None
        assert result.binarized_fraction == {10.0: 0.0, 100.0: 0.0}
