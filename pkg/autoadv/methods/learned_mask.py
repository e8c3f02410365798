"""Joint optimization of a perturbation and a mask-generating encoder.

Each iteration encodes the current perturbation, squashes the code with a
scaled sigmoid into a soft mask, and descends the cross-entropy toward the
target class plus a mask-density penalty. The perturbation takes a
momentum-normalized signed step inside the l-infinity ball and the encoder
takes an SGD-with-momentum step on the same loss. The sigmoid scale is
annealed geometrically so the mask becomes binary by the last iteration,
and the pixels whose mask entries end above 0.5 are the ones perturbed.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from ..core.autodiff import Graph, Tensor, broadcast_to, matmul, reshape, scale
from ..core.classifier import ClassifierModel
from ..core.models import AttackConfig, AttackResult, IterationRecord
from .base import BaseAttack, MomentumTracker, Optimized
from .encoder import EncoderParams, EncoderSpec, encode, init_encoder, sgd_momentum_step
from .steps import (alpha_schedule, dynamic_lambda, hard_threshold, init_delta, is_binarized, pgd_step,
                    scaled_sigmoid_mask, total_loss)

logger = logging.getLogger(__name__)


class LearnedMaskAttack(BaseAttack):
    """The full method: encoder, scaled-sigmoid binarization and dynamic sparsity weight."""

    name = "full"

    def make_encoder(self, shape: tuple[int, int, int], config: AttackConfig) -> EncoderParams | None:
        # the encoder sees delta / epsilon in [-1, 1]
        return init_encoder(EncoderSpec(config.encoder, shape, config.channel_independent, config.seed,
                                        input_scale=1.0 / config.epsilon))

    def pre_mask(self, delta: Tensor, encoder: EncoderParams | None, bound) -> Tensor:
        return encode(encoder, delta, bound)

    def soft_mask(self, delta: Tensor, encoder, bound, alpha: float, shape) -> tuple[Tensor, Tensor]:
        """The mask in the encoder's output shape and broadcast to the image shape."""
        mask = scaled_sigmoid_mask(self.pre_mask(delta, encoder, bound), alpha)
        full = mask if mask.shape == tuple(shape) else broadcast_to(mask, shape)
        return mask, full

    def optimize(self, model: ClassifierModel, x: np.ndarray, target: int, config: AttackConfig) -> Optimized:
        shape = x.shape
        if config.epsilon == 0:
            # empty feasible set: nothing can be perturbed
            return Optimized(np.zeros(shape), np.zeros(shape))

        n = x.size
        encoder = self.make_encoder(shape, config)
        delta = init_delta(config.epsilon, shape, config.seed)
        momentum = MomentumTracker(shape, config.mu, config.degenerate_limit)
        trace, first_success, executed = [], None, 0

        for t in range(config.iterations):
            alpha = alpha_schedule(t, config.iterations, config.alpha_start, config.alpha_end)
            graph = Graph()
            d = graph.variable(delta)
            bound = encoder.bind(graph) if encoder is not None else None
            mask, full_mask = self.soft_mask(d, encoder, bound, alpha, shape)
            lam = dynamic_lambda(mask.value, config.c, config.gamma)
            loss = total_loss(model, graph.constant(x), d, full_mask, target, lam, n)
            graph.backward(loss)

            hard_mask = hard_threshold(full_mask.value)
            if config.track_first_success and first_success is None:
                if self.succeeds(model, x, delta, hard_mask, target):
                    first_success = t

            # the hard mask depends only on the sign of H, so it is already the finalized one
            g = self.advance_momentum(momentum, d.grad, t, model, x, delta, hard_mask, target)
            if g is None:
                break
            delta = pgd_step(delta, g, config.step, config.epsilon)
            executed = t + 1
            if encoder is not None:
                grads = {name: tensor.grad for name, tensor in bound.items() if tensor.grad is not None}
                sgd_momentum_step(encoder, grads, config.enc_lr, config.enc_momentum)

            active = int(np.count_nonzero(mask.value > 0.5))
            if config.record_trace:
                trace.append(IterationRecord(t, alpha, lam, float(np.max(np.abs(delta))), loss.item(),
                                             float(mask.value.min()), float(mask.value.max()), active))
            if config.log_every and t % config.log_every == 0:
                logger.debug("t=%d alpha=%.4g lambda=%.4f loss=%.5f active=%d/%d", t, alpha, lam,
                             loss.item(), active, mask.size)

        graph = Graph()
        bound = encoder.bind(graph) if encoder is not None else None
        mask, full_mask = self.soft_mask(graph.constant(delta), encoder, bound, config.alpha_end, shape)
        binarized = is_binarized(mask.value, config.binarization_tol)
        if not binarized:
            logger.warning("%s: final mask not binarized within %.0e", self.name, config.binarization_tol)
        return Optimized(
            delta=delta,
            hard_mask=hard_threshold(full_mask.value),
            soft_mask=np.array(mask.value),
            iterations=executed,
            binarized=binarized,
            degenerate_steps=momentum.degenerate_steps,
            first_success=first_success,
            trace=trace,
        )


class NoEncoderAttack(LearnedMaskAttack):
    """Ablation without encoder: the perturbation itself is fed to the scaled sigmoid."""

    name = "no-encoder"

    def make_encoder(self, shape, config):
        return None

    def pre_mask(self, delta: Tensor, encoder, bound) -> Tensor:
        """delta / epsilon, averaged over channels when one entry covers a position."""
        if self.config.channel_independent or delta.shape[2] == 1:
            return scale(delta, 1.0 / self.config.epsilon)
        h, w, c = delta.shape
        ones = delta.graph.constant(np.full((c, 1), 1.0 / (c * self.config.epsilon)))
        return reshape(matmul(reshape(delta, (h * w, c)), ones), (h, w, 1))


def run_attack(model: ClassifierModel, x: np.ndarray, target: int, config: AttackConfig) -> AttackResult:
    return LearnedMaskAttack(config).run(model, x, target)


def baseline_no_encoder(model: ClassifierModel, x: np.ndarray, target: int, config: AttackConfig) -> AttackResult:
    return NoEncoderAttack(config).run(model, x, target)


@dataclass
class CalibrationResult:
    """Chosen alpha_end (None if no candidate binarized every run) and per-candidate binarized fractions."""
    alpha_end: float | None
    binarized_fraction: dict[float, float]


def calibrate_alpha_end(model: ClassifierModel, images: list[np.ndarray], targets: list[int],
                        candidates: list[float], config: AttackConfig) -> CalibrationResult:
    """
    Finds the smallest alpha_end whose scaled sigmoid yields truly binary masks.

    Candidates are tried in ascending order on a handful of images; the first
    one for which every run ends binarized is returned.
    """
    fractions = {}
    for alpha_end in sorted(candidates):
        if alpha_end <= config.alpha_start:
            continue
        attack = LearnedMaskAttack(replace(config, alpha_end=float(alpha_end), record_trace=False))
        results = [attack.run(model, image, target) for image, target in zip(images, targets)]
        fractions[float(alpha_end)] = float(np.mean([r.binarized for r in results])) if results else 0.0
        logger.info("alpha_end=%g: %.0f%% of runs binarized", alpha_end, 100 * fractions[float(alpha_end)])
        if results and fractions[float(alpha_end)] == 1.0:
            return CalibrationResult(float(alpha_end), fractions)
    return CalibrationResult(None, fractions)
