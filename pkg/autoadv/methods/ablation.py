"""Runs several attack strategies on one shared task list and collects their report sections."""

import logging
from dataclasses import dataclass, field, replace

from ..analysis.report import ReportSection
from ..core.classifier import ClassifierModel
from ..core.exceptions import AutoAdvError
from ..core.models import AttackConfig, AttackTask
from ..core.pipeline import BatchOutcome, Pipeline
from .learned_mask import LearnedMaskAttack, NoEncoderAttack
from .base import BaseAttack
from .dense import DenseAttack, L1DeltaAttack, RandomSubsetAttack

logger = logging.getLogger(__name__)

VARIANTS = ("full", "dense", "random", "l1-delta", "no-encoder")


@dataclass
class VariantRun:
    """Sections produced so far and the first failure that stopped the run."""
    sections: list[ReportSection] = field(default_factory=list)
    outcomes: dict[str, BatchOutcome] = field(default_factory=dict)
    error: AutoAdvError | None = None

    @property
    def truncated(self) -> bool:
        return self.error is not None


def matched_k(full: ReportSection, n: int) -> int:
    """The full method's mean l0 rounded to an integer, kept inside [1, n]."""
    mean_l0 = full.aggregates.mean_l0
    if mean_l0 is None:
        return 1
    return min(n, max(1, int(round(mean_l0))))


def run_variants(model: ClassifierModel, tasks: list[AttackTask], attacks: list[BaseAttack],
                 workers: int = 1, progress: bool = True, names: list[str] | None = None) -> VariantRun:
    """Run each strategy in turn on the same tasks; stops after the first strategy that fails."""
    run = VariantRun()
    for i, attack in enumerate(attacks):
        name = names[i] if names else attack.name
        outcome = Pipeline(attack, workers, progress).run(model, tasks)
        run.outcomes[name] = outcome
        run.sections.append(ReportSection(name, outcome.records))
        if outcome.error is not None:
            run.error = outcome.error
            break
    return run


def run_ablation(model: ClassifierModel, tasks: list[AttackTask], config: AttackConfig, l1_lambda: float,
                 random_k: int | None = None, workers: int = 1, progress: bool = True) -> VariantRun:
    """
    Compare the full method with its four ablations on identical images and targets.

    The random-subset baseline touches ``random_k`` components, by default the
    full method's rounded mean l0, so both spend the same budget of pixels.
    """
    n = model.num_pixels
    run = run_variants(model, tasks, [LearnedMaskAttack(config)], workers, progress)
    if run.truncated:
        return run
    k = random_k if random_k is not None else matched_k(run.sections[0], n)
    logger.info("Random-subset baseline uses k=%d of %d components", k, n)

    rest = run_variants(model, tasks, [
        DenseAttack(config),
        RandomSubsetAttack(config, k=k),
        L1DeltaAttack(config, l1_lambda),
        NoEncoderAttack(config),
    ], workers, progress)
    run.sections.extend(rest.sections)
    run.outcomes.update(rest.outcomes)
    run.error = rest.error
    return run


def run_encoders(model: ClassifierModel, tasks: list[AttackTask], config: AttackConfig,
                 kinds: tuple[str, ...] = ("fc", "conv"), workers: int = 1, progress: bool = True) -> VariantRun:
    """The full method once per encoder structure, sections named after the structure."""
    attacks = [LearnedMaskAttack(replace(config, encoder=kind)) for kind in kinds]
    return run_variants(model, tasks, attacks, workers, progress, names=list(kinds))
