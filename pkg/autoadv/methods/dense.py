"""Dense momentum sign-gradient attacks used as ablation baselines.

All three baselines share one loop: the perturbation update of the full
method with the mask frozen. ``DenseAttack`` gates nothing,
``RandomSubsetAttack`` gates a uniformly random pixel subset, and
``L1DeltaAttack`` gates nothing but adds an l1 penalty on the perturbation.
"""

import logging
from dataclasses import replace

import numpy as np

from ..core.autodiff import Graph, absolute, scale, softmax_cross_entropy, total
from ..core.classifier import ClassifierModel
from ..core.exceptions import ContractError
from ..core.models import AttackConfig, AttackResult, IterationRecord
from ..core.seeding import stream
from .base import BaseAttack, MomentumTracker, Optimized
from .steps import init_delta, pgd_step

logger = logging.getLogger(__name__)

L1_ZERO_TOLERANCE = 1e-6


class DenseAttack(BaseAttack):
    """Momentum-normalized signed gradient descent on all components (mask fixed to ones)."""

    name = "dense"
    l1_lambda = 0.0

    def __init__(self, config: AttackConfig, stop_on_success: bool = False):
        super().__init__(config)
        self.stop_on_success = stop_on_success

    def fixed_mask(self, x: np.ndarray, config: AttackConfig) -> np.ndarray:
        return np.ones_like(x)

    def finalize(self, delta: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return delta, mask

    def optimize(self, model: ClassifierModel, x: np.ndarray, target: int, config: AttackConfig) -> Optimized:
        mask = self.fixed_mask(x, config)
        if config.epsilon == 0:
            return Optimized(np.zeros(x.shape), np.zeros(x.shape))

        n = x.size
        active = int(np.count_nonzero(mask))
        delta = init_delta(config.epsilon, x.shape, config.seed)
        momentum = MomentumTracker(x.shape, config.mu, config.degenerate_limit)
        trace, first_success, executed = [], None, 0

        for t in range(config.iterations):
            graph = Graph()
            d = graph.variable(delta)
            logits = model.forward(graph.constant(x) + d * graph.constant(mask))
            loss = softmax_cross_entropy(logits, target)
            if self.l1_lambda:
                loss = loss + scale(total(absolute(d)), self.l1_lambda / n)
            graph.backward(loss)

            g = self.advance_momentum(momentum, d.grad, t, model, x, delta, mask, target)
            if g is None:
                break
            delta = pgd_step(delta, g, config.step, config.epsilon)
            executed = t + 1
            if config.record_trace:
                trace.append(IterationRecord(t, 0.0, self.l1_lambda, float(np.max(np.abs(delta))), loss.item(),
                                             float(mask.min()), float(mask.max()), active))
            if (config.track_first_success or self.stop_on_success) and first_success is None:
                if self.succeeds(model, x, delta, mask, target):
                    first_success = t
                    if self.stop_on_success:
                        break

        delta, hard_mask = self.finalize(delta, mask)
        return Optimized(delta, hard_mask, iterations=executed, degenerate_steps=momentum.degenerate_steps,
                         first_success=first_success, trace=trace)


class RandomSubsetAttack(DenseAttack):
    """Dense attack restricted to a fixed subset of k components, uniform per seed or given explicitly."""

    name = "random"

    def __init__(self, config: AttackConfig, k: int | None = None, subset: np.ndarray | None = None,
                 stop_on_success: bool = False):
        super().__init__(config, stop_on_success)
        if (k is None) == (subset is None):
            raise ContractError("give exactly one of k or an explicit subset mask")
        self.k = k
        self.subset = None if subset is None else np.asarray(subset, dtype=np.float64)

    def fixed_mask(self, x: np.ndarray, config: AttackConfig) -> np.ndarray:
        if self.subset is not None:
            if self.subset.shape != x.shape:
                raise ContractError(f"subset mask shape {self.subset.shape} differs from image {x.shape}")
            return self.subset
        if not 0 <= self.k <= x.size:
            raise ContractError(f"subset size {self.k} outside [0, {x.size}]")
        chosen = stream(config.seed, "subset").choice(x.size, size=self.k, replace=False)
        mask = np.zeros(x.size)
        mask[chosen] = 1.0
        return mask.reshape(x.shape)


class L1DeltaAttack(DenseAttack):
    """Dense attack with lambda * ||delta||_1 / N added to the loss; tiny components are zeroed at the end."""

    name = "l1-delta"

    def __init__(self, config: AttackConfig, l1_lambda: float):
        super().__init__(config)
        if l1_lambda < 0:
            raise ContractError(f"l1 weight must be >= 0, got {l1_lambda}")
        self.l1_lambda = float(l1_lambda)

    def finalize(self, delta, mask):
        delta = np.where(np.abs(delta) < L1_ZERO_TOLERANCE, 0.0, delta)
        return delta, (delta != 0).astype(np.float64)


def _config(epsilon: float, iterations: int, mu: float, beta: float | None, seed: int) -> AttackConfig:
    return replace(AttackConfig(), epsilon=epsilon, iterations=iterations, mu=mu, beta=beta, seed=seed)


def baseline_dense(model: ClassifierModel, x: np.ndarray, target: int, epsilon: float, iterations: int,
                   mu: float, beta: float | None, seed: int) -> AttackResult:
    return DenseAttack(_config(epsilon, iterations, mu, beta, seed)).run(model, x, target)


def baseline_random(model: ClassifierModel, x: np.ndarray, target: int, epsilon: float, k: int,
                    iterations: int, mu: float, beta: float | None, seed: int) -> AttackResult:
    return RandomSubsetAttack(_config(epsilon, iterations, mu, beta, seed), k=k).run(model, x, target)


def baseline_l1_delta(model: ClassifierModel, x: np.ndarray, target: int, epsilon: float, l1_lambda: float,
                      iterations: int, mu: float, beta: float | None, seed: int) -> AttackResult:
    return L1DeltaAttack(_config(epsilon, iterations, mu, beta, seed), l1_lambda).run(model, x, target)
