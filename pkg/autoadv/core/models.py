from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ConfigError

TRAIN, VAL = 0, 1
ENCODER_KINDS = ("fc", "conv")


@dataclass
class Dataset:
    """
    Procedurally generated images with labels and train/val split tags.

    Attributes:
        images: Array of shape (n, h, w, c) with values in [0, 1].
        labels: Integer class indices in [0, num_classes).
        splits: Per-image split tag, ``TRAIN`` (0) or ``VAL`` (1).
        num_classes: Number of classes K.
    """
    images: np.ndarray
    labels: np.ndarray
    splits: np.ndarray
    num_classes: int

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def split(self, tag: int) -> "Dataset":
        keep = self.splits == tag
        return Dataset(self.images[keep], self.labels[keep], self.splits[keep], self.num_classes)

    @property
    def train(self) -> "Dataset":
        return self.split(TRAIN)

    @property
    def val(self) -> "Dataset":
        return self.split(VAL)


@dataclass(frozen=True)
class Norms:
    l0: int
    l1: float
    l2: float
    linf: float


@dataclass
class AttackConfig:
    """
    Hyperparameters of one attack instance.

    Attributes:
        epsilon: l-infinity radius on the [0, 1] pixel scale.
        iterations: Number of iterations T (the loop always runs all of them).
        c: Floor C of the dynamic sparsity weight.
        gamma: Range gamma of the dynamic sparsity weight.
        alpha_start: Initial sigmoid scaling factor.
        alpha_end: Final sigmoid scaling factor.
        mu: Momentum decay factor of the perturbation update.
        beta: Perturbation step size; ``None`` means ``epsilon / 10``.
        enc_lr: Encoder learning rate.
        enc_momentum: Encoder momentum.
        seed: Seed of this instance's random streams.
        channel_independent: One mask entry per channel value when true,
            one per spatial position (shared across channels) otherwise.
        binarization_tol: Largest allowed distance of a final mask entry from 0 or 1.
        encoder: Encoder structure, ``"fc"`` or ``"conv"``.
        degenerate_limit: Consecutive vanishing-gradient iterations tolerated
            before the attack aborts.
        track_first_success: Record the first iteration whose hard-thresholded
            iterate already reaches the target.
        record_trace: Keep per-iteration state records in the result.
        log_every: Iteration interval of DEBUG progress messages.
    """
    epsilon: float = 16 / 255
    iterations: int = 500
    c: float = 0.1
    gamma: float = 1.0
    alpha_start: float = 0.1
    alpha_end: float = 100.0
    mu: float = 1.0
    beta: float | None = None
    enc_lr: float = 0.01
    enc_momentum: float = 0.9
    seed: int = 0
    channel_independent: bool = True
    binarization_tol: float = 1e-3
    encoder: str = "fc"
    degenerate_limit: int = 25
    track_first_success: bool = False
    record_trace: bool = True
    log_every: int = 50

    @property
    def step(self) -> float:
        return self.epsilon / 10 if self.beta is None else self.beta

    def with_seed(self, seed: int) -> "AttackConfig":
        return replace(self, seed=int(seed))

    def validate(self) -> "AttackConfig":
        """Check the documented ranges; returns self so calls can be chained."""
        problems = []
        if not 0.0 <= self.epsilon <= 1.0:
            problems.append(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.iterations < 1:
            problems.append(f"iterations must be >= 1, got {self.iterations}")
        if self.c <= 0:
            problems.append(f"c must be > 0, got {self.c}")
        if self.gamma <= 0:
            problems.append(f"gamma must be > 0, got {self.gamma}")
        if not 0 < self.alpha_start < self.alpha_end:
            problems.append(
                f"need 0 < alpha_start < alpha_end, got {self.alpha_start} and {self.alpha_end}"
            )
        if self.beta is not None and self.beta <= 0:
            problems.append(f"beta must be > 0, got {self.beta}")
        if self.mu < 0:
            problems.append(f"mu must be >= 0, got {self.mu}")
        if self.enc_lr <= 0 or self.enc_momentum < 0:
            problems.append(f"invalid encoder optimizer settings lr={self.enc_lr} momentum={self.enc_momentum}")
        if not 0 < self.binarization_tol < 0.5:
            problems.append(f"binarization_tol must lie in (0, 0.5), got {self.binarization_tol}")
        if self.encoder not in ENCODER_KINDS:
            problems.append(f"encoder must be one of {ENCODER_KINDS}, got '{self.encoder}'")
        if self.degenerate_limit < 1:
            problems.append(f"degenerate_limit must be >= 1, got {self.degenerate_limit}")
        if problems:
            raise ConfigError("; ".join(problems))
        return self


@dataclass(frozen=True)
class IterationRecord:
    """State of one attack iteration, recorded after the perturbation step."""
    t: int
    alpha: float
    lam: float
    delta_linf: float
    loss: float
    mask_min: float
    mask_max: float
    active: int


@dataclass
class AttackResult:
    """
    Outcome of one attack on one image.

    Attributes:
        method: Name of the attack strategy that produced the result.
        target: Target class y*.
        x_adv: Finalized adversarial image, clamped to [0, 1].
        perturbation: Effective perturbation ``x_adv - x``.
        hard_mask: 0/1 array marking the components the attack may touch.
        success: Whether the model classifies ``x_adv`` as the target.
        predicted: Class the model assigns to ``x_adv``.
        norms: l0/l1/l2/l-infinity norms of the effective perturbation.
        iterations: Iterations executed.
        seconds: Wall time of the attack.
        binarized: Whether every final soft-mask entry lies within the
            binarization tolerance of 0 or 1 (always true for fixed masks).
        degenerate_steps: Iterations whose gradient vanished and were
            replaced by pure momentum decay.
        first_success: First iteration at which the hard-thresholded
            iterate succeeded, when tracked.
        trace: Per-iteration records, when requested.
    """
    method: str
    target: int
    x_adv: np.ndarray
    perturbation: np.ndarray
    hard_mask: np.ndarray
    success: bool
    predicted: int
    norms: Norms
    iterations: int
    seconds: float
    binarized: bool = True
    degenerate_steps: int = 0
    first_success: int | None = None
    trace: list[IterationRecord] = field(default_factory=list)


@dataclass(frozen=True)
class AttackTask:
    """One image to attack: its id, pixels, true label, target class and attack seed."""
    image_id: int
    image: np.ndarray
    label: int
    target: int
    seed: int
