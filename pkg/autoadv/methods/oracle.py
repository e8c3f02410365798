import itertools
import logging
from dataclasses import dataclass, replace

import numpy as np

from ..core.classifier import ClassifierModel
from ..core.exceptions import ContractError, DegenerateGradientError
from ..core.models import AttackConfig
from .dense import RandomSubsetAttack

logger = logging.getLogger(__name__)


@dataclass
class OracleResult:
    """Smallest successful subset size (None if no subset succeeds), one such subset and the number of subsets tried."""
    min_size: int | None
    subset: tuple[int, ...] | None
    evaluated: int


def subset_oracle(model: ClassifierModel, x: np.ndarray, target: int, config: AttackConfig,
                  max_components: int = 12) -> OracleResult:
    """
    Exhaustive search for the fewest components a dense attack needs.

    Subsets are enumerated by increasing size; for each, a dense attack
    restricted to the subset runs until it first succeeds. The first size with
    a successful subset is the minimum.

    Raises:
        ContractError: If the image has more than ``max_components`` components.
    """
    n = int(np.asarray(x).size)
    if n > max_components:
        raise ContractError(f"exhaustive search over {n} components exceeds the limit of {max_components}")

    config = replace(config, record_trace=False)
    evaluated = 0
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            mask = np.zeros(n)
            mask[list(subset)] = 1.0
            attack = RandomSubsetAttack(config, subset=mask.reshape(np.shape(x)), stop_on_success=True)
            evaluated += 1
            try:
                succeeded = attack.run(model, x, target).success
            except DegenerateGradientError:
                # the loss does not depend on any component of this subset
                succeeded = False
            if succeeded:
                logger.debug("oracle: size %d succeeds with %s after %d subsets", size, subset, evaluated)
                return OracleResult(size, subset, evaluated)
    return OracleResult(None, None, evaluated)
