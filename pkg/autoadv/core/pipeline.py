import logging
from dataclasses import dataclass, field

from joblib import Parallel, delayed
from tqdm import tqdm

from ..analysis.report import ImageRecord
from ..methods.base import BaseAttack
from .classifier import ClassifierModel
from .exceptions import AutoAdvError
from .models import AttackResult, AttackTask

logger = logging.getLogger(__name__)


@dataclass
class BatchOutcome:
    """
    What a batch run produced.

    Attributes:
        records: Report rows of the finished attacks, ordered by image id.
        results: Full attack results keyed by image id.
        error: The first failure in image-id order, if any attack failed.
        failed_id: Image id of that failure.
    """
    records: list[ImageRecord] = field(default_factory=list)
    results: dict[int, AttackResult] = field(default_factory=dict)
    error: AutoAdvError | None = None
    failed_id: int | None = None

    @property
    def truncated(self) -> bool:
        return self.error is not None


def _attack_one(attack: BaseAttack, model: ClassifierModel, task: AttackTask):
    try:
        return task.image_id, attack.run(model, task.image, task.target, seed=task.seed), None
    except AutoAdvError as exc:
        return task.image_id, None, exc


class Pipeline:
    """
    Runs one attack strategy over a list of tasks.

    The strategy is injected on creation. Tasks fan out to a bounded joblib
    worker pool; each task owns its seed and graph and only reads the shared
    model. Rows come back ordered by image id whatever the completion order.
    """

    def __init__(self, attack: BaseAttack, workers: int = 1, progress: bool = True):
        if not isinstance(attack, BaseAttack):
            raise TypeError("attack must be an instance of a BaseAttack subclass")
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        self.attack = attack
        self.workers = workers
        self.progress = progress

    def run(self, model: ClassifierModel, tasks: list[AttackTask]) -> BatchOutcome:
        logger.info("Running %s on %d images with %d worker(s)", self.attack.name, len(tasks), self.workers)
        bar = tqdm(tasks, desc=self.attack.name, unit="img", disable=not self.progress or not tasks)
        finished = Parallel(n_jobs=self.workers)(delayed(_attack_one)(self.attack, model, task) for task in bar)

        outcome = BatchOutcome()
        for image_id, result, error in sorted(finished, key=lambda item: item[0]):
            if error is not None:
                logger.error("%s failed on image %d: %s", self.attack.name, image_id, error)
                if outcome.error is None:
                    outcome.error, outcome.failed_id = error, image_id
                continue
            outcome.results[image_id] = result
            outcome.records.append(ImageRecord.from_result(image_id, result))
        return outcome
