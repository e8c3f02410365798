import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from ..analysis.metrics import norms
from ..core.classifier import ClassifierModel, check_image, predict_class
from ..core.exceptions import ContractError, DegenerateGradientError
from ..core.models import AttackConfig, AttackResult, IterationRecord
from .steps import apply_perturbation, momentum_grad_update

logger = logging.getLogger(__name__)


@dataclass
class Optimized:
    """
    What an attack's optimization loop hands back for finalization.

    Attributes:
        delta: Final perturbation iterate.
        hard_mask: 0/1 gate applied to ``delta`` when forming the adversarial image.
        soft_mask: Final relaxed mask, if the method has one.
        iterations: Iterations executed.
        binarized: Whether the relaxed mask ended within tolerance of {0, 1}.
        degenerate_steps: Iterations with a vanishing gradient.
        first_success: First succeeding iteration, if tracked.
        trace: Per-iteration records.
    """
    delta: np.ndarray
    hard_mask: np.ndarray
    soft_mask: np.ndarray | None = None
    iterations: int = 0
    binarized: bool = True
    degenerate_steps: int = 0
    first_success: int | None = None
    trace: list[IterationRecord] = field(default_factory=list)


class MomentumTracker:
    """Momentum buffer g with the vanishing-gradient fallback of the perturbation update."""

    def __init__(self, shape: tuple[int, ...], mu: float, limit: int):
        self.g = np.zeros(shape)
        self.mu = mu
        self.limit = limit
        self.streak = 0
        self.degenerate_steps = 0

    def update(self, grad: np.ndarray | None, t: int) -> np.ndarray:
        """
        Accumulate one normalized gradient, or decay the buffer if it vanished.

        Raises:
            DegenerateGradientError: After more than ``limit`` consecutive
                vanishing gradients.
        """
        if grad is None:
            grad = np.zeros_like(self.g)
        try:
            self.g = momentum_grad_update(self.g, grad, self.mu)
            self.streak = 0
        except DegenerateGradientError as exc:
            self.streak += 1
            self.degenerate_steps += 1
            logger.warning("iteration %d: %s, decaying momentum only", t, exc)
            if self.streak > self.limit:
                logger.warning("gradient vanished for %d consecutive iterations", self.streak)
                raise
            self.g = self.mu * self.g
        return self.g


class BaseAttack(ABC):
    """
    Abstract base class for every targeted attack strategy.

    Subclasses implement :meth:`optimize`, the method-specific loop; this
    class checks preconditions, times the attack, forms the clamped
    adversarial image from the returned perturbation and hard mask, and
    verifies that the target model was not modified.
    """

    name = "attack"

    def __init__(self, config: AttackConfig):
        self.config = config

    @abstractmethod
    def optimize(self, model: ClassifierModel, x: np.ndarray, target: int,
                 config: AttackConfig) -> Optimized:
        """
        Run the method-specific optimization.

        Args:
            model: Frozen target model.
            x: Clean image in [0, 1].
            target: Target class.
            config: Resolved configuration of this instance.

        Returns:
            The final perturbation, hard mask and diagnostics.
        """

    def run(self, model: ClassifierModel, x: np.ndarray, target: int, seed: int | None = None) -> AttackResult:
        """
        Attack one image.

        Args:
            model: Frozen target model.
            x: Clean image, shape equal to the model input, values in [0, 1].
            target: Target class; must differ from the current prediction.
            seed: Overrides the configured seed for this instance.

        Returns:
            The finalized AttackResult.

        Raises:
            ContractError: If the target is invalid or already predicted, or
                the model was modified during the attack.
        """
        config = (self.config if seed is None else self.config.with_seed(seed)).validate()
        x = check_image(model, x)
        if not 0 <= target < model.num_classes:
            raise ContractError(f"target {target} outside [0, {model.num_classes})")
        if predict_class(model, x) == target:
            raise ContractError(f"image is already classified as target {target}")

        checksum = model.checksum()
        start = time.perf_counter()
        outcome = self.optimize(model, x, target, config)
        x_adv = apply_perturbation(x, outcome.delta, outcome.hard_mask)
        predicted = predict_class(model, x_adv)
        seconds = time.perf_counter() - start
        if model.checksum() != checksum:
            raise ContractError(f"{self.name} attack modified the target model parameters")

        perturbation = x_adv - x
        result = AttackResult(
            method=self.name,
            target=int(target),
            x_adv=x_adv,
            perturbation=perturbation,
            hard_mask=outcome.hard_mask,
            success=predicted == target,
            predicted=predicted,
            norms=norms(perturbation),
            iterations=outcome.iterations,
            seconds=seconds,
            binarized=outcome.binarized,
            degenerate_steps=outcome.degenerate_steps,
            first_success=outcome.first_success,
            trace=outcome.trace,
        )
        logger.debug("%s: target %d success=%s l0=%d in %.2fs", self.name, target, result.success,
                     result.norms.l0, seconds)
        return result

    @staticmethod
    def succeeds(model: ClassifierModel, x: np.ndarray, delta: np.ndarray, hard_mask: np.ndarray,
                 target: int) -> bool:
        return predict_class(model, apply_perturbation(x, delta, hard_mask)) == target

    def advance_momentum(self, momentum: MomentumTracker, grad: np.ndarray | None, t: int, model: ClassifierModel,
                         x: np.ndarray, delta: np.ndarray, hard_mask: np.ndarray, target: int) -> np.ndarray | None:
        """
        The next momentum buffer, or None when the loop should stop early.

        A persistently vanishing gradient at an iterate that already reaches
        the target ends the loop instead of aborting the attack.

        Raises:
            DegenerateGradientError: If the gradient stays degenerate and the
                current iterate does not succeed.
        """
        try:
            return momentum.update(grad, t)
        except DegenerateGradientError:
            if not self.succeeds(model, x, delta, hard_mask, target):
                raise
            logger.info("%s: gradient vanished at a succeeding iterate, stopping after iteration %d", self.name, t)
            return None
