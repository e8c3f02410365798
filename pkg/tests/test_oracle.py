from dataclasses import replace

import numpy as np
import pytest

from autoadv.core.classifier import ClassifierModel, LayerSpec
from autoadv.core.exceptions import ContractError
from autoadv.core.models import AttackConfig
from autoadv.methods.oracle import subset_oracle
from tests.conftest import linear_instance


def single_pixel_model() -> ClassifierModel:
    """Only pixel 4 moves the class-1 logit; a full-budget push on it flips 0.3 of margin."""
    weight = np.zeros((9, 2))
    weight[4, 1] = 10.0
    layer = LayerSpec("dense", {"weight": weight, "bias": np.array([5.3, 0.0])})
    return ClassifierModel((3, 3, 1), 2, [layer]).freeze()


class TestSubsetOracle:
    """
    Exhaustive minimum-subset search on tiny images.
    """
    def setup_method(self, method):
        self.config = replace(AttackConfig(), iterations=30, seed=0)

    def test_single_relevant_pixel(self):
        result = subset_oracle(single_pixel_model(), np.full((3, 3, 1), 0.5), 1, self.config)
        assert result.min_size == 1
        assert result.subset == (4,)
        assert result.evaluated == 5

    def test_unreachable_target(self):
        weight = np.zeros((9, 2))
        weight[4, 1] = 10.0
        model = ClassifierModel((3, 3, 1), 2, [LayerSpec("dense", {"weight": weight, "bias": np.array([50.0, 0.0])})])
        result = subset_oracle(model.freeze(), np.full((3, 3, 1), 0.5), 1, replace(self.config, iterations=5))
        assert result.min_size is None
        assert result.subset is None
        assert result.evaluated == 2 ** 9 - 1

    def test_minimum_never_exceeds_dense(self):
        model, x, target = linear_instance(3)
        result = subset_oracle(model, x, target, self.config)
        assert result.min_size is not None
        assert 1 <= result.min_size <= 9
        assert len(result.subset) == result.min_size

    def test_too_many_components(self):
        model = ClassifierModel((4, 4, 1), 2, [LayerSpec("dense", {"weight": np.ones((16, 2)), "bias": np.zeros(2)})])
        with pytest.raises(ContractError):
            subset_oracle(model.freeze(), np.full((4, 4, 1), 0.5), 1, self.config)
