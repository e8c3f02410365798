from pathlib import Path

import numpy as np
import pytest

from autoadv.core.classifier import ClassifierModel, LayerSpec, default_classifier, train
from autoadv.core.data_loader import generate_synthetic

DATA_DIR = Path(__file__).parent / "data"


def linear_instance(seed: int, epsilon: float = 16 / 255, margin: float = 0.3, channels: int = 1):
    """
    A 3x3 two-class linear model, an image it assigns to class 0, and target 1.

    The bias is set so that class 0 wins by ``margin`` times the largest logit
    change a full-budget perturbation can produce; the target is reachable.
    """
    rng = np.random.default_rng(seed)
    n = 9 * channels
    weight = rng.normal(size=(n, 2))
    x = rng.uniform(0.2, 0.8, size=(3, 3, channels))
    diff = weight[:, 0] - weight[:, 1]
    reach = epsilon * np.abs(diff).sum()
    bias = np.array([margin * reach - x.reshape(-1) @ diff, 0.0])
    model = ClassifierModel((3, 3, channels), 2, [LayerSpec("dense", {"weight": weight, "bias": bias})])
    return model.freeze(), x, 1


@pytest.fixture
def linear_case():
    return linear_instance(0)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic(seed=0, count=300, w=8, h=8, c=1, num_classes=10, contrast=0.6)


@pytest.fixture(scope="session")
def small_model(small_dataset):
    model, _ = train(default_classifier(0, (8, 8, 1), 10), small_dataset, epochs=6, lr=0.05, momentum=0.9, seed=0)
    return model


@pytest.fixture(scope="session")
def fixture_model_path():
    return DATA_DIR / "linear_v1.aadv"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale empirical checks (deselect with -m 'not slow')")
