"""Building blocks of the joint perturbation/mask optimization.

Each function is one step of the update loop: random start in the
l-infinity ball, scaled-sigmoid masking, the mask-density-dependent sparsity
weight, the joint loss, momentum-normalized gradient accumulation, the
signed projected step and the annealing schedule of the sigmoid scale.
"""

import numpy as np

from ..core.autodiff import Tensor, scale, sigmoid, softmax_cross_entropy, total
from ..core.classifier import ClassifierModel
from ..core.exceptions import ContractError, DegenerateGradientError
from ..core.seeding import stream

DEGENERATE_L1 = 1e-12


def init_delta(epsilon: float, shape: tuple[int, ...], seed: int) -> np.ndarray:
    """Components i.i.d. uniform in [-epsilon, epsilon], drawn from the seed's ``delta`` stream."""
    if epsilon <= 0:
        raise ContractError(f"epsilon must be > 0 to sample a start point, got {epsilon}")
    return stream(seed, "delta").uniform(-epsilon, epsilon, size=shape)


def scaled_sigmoid_mask(pre_mask: Tensor, alpha: float) -> Tensor:
    if alpha <= 0:
        raise ContractError(f"alpha must be > 0, got {alpha}")
    return sigmoid(scale(pre_mask, alpha))


def dynamic_lambda(mask: np.ndarray, c: float, gamma: float) -> float:
    """C + gamma * (fraction of entries strictly above 0.5). A plain float: no gradient flows through it."""
    mask = np.asarray(mask)
    return float(c + gamma * np.count_nonzero(mask > 0.5) / mask.size)


def total_loss(model: ClassifierModel, x: Tensor, delta: Tensor, mask: Tensor, target: int,
               lam: float, n: int, bound=None) -> Tensor:
    """CE(f(x + delta * mask), target) + lam * ||mask||_1 / n."""
    adversarial = softmax_cross_entropy(model.forward(x + delta * mask, bound), target)
    return adversarial + scale(total(mask), lam / n)


def momentum_grad_update(g: np.ndarray, grad: np.ndarray, mu: float) -> np.ndarray:
    """
    g_{t+1} = mu * g_t + grad / ||grad||_1.

    Raises:
        DegenerateGradientError: If ||grad||_1 is below 1e-12; the caller
            then falls back to ``mu * g_t``.
    """
    norm = float(np.sum(np.abs(grad)))
    if norm < DEGENERATE_L1:
        raise DegenerateGradientError(norm)
    return mu * g + grad / norm


def pgd_step(delta: np.ndarray, g: np.ndarray, beta: float, epsilon: float) -> np.ndarray:
    """Signed descent step followed by projection onto [-epsilon, epsilon]; sign(0) = 0."""
    return np.clip(delta - beta * np.sign(g), -epsilon, epsilon)


def alpha_schedule(t: int, iterations: int, alpha_start: float, alpha_end: float) -> float:
    """Geometric interpolation alpha_start * (alpha_end / alpha_start) ** (t / T) with exact endpoints."""
    if not 0 <= t <= iterations:
        raise ContractError(f"iteration {t} outside [0, {iterations}]")
    if t == 0:
        return float(alpha_start)
    if t == iterations:
        return float(alpha_end)
    return float(alpha_start * (alpha_end / alpha_start) ** (t / iterations))


def hard_threshold(mask: np.ndarray) -> np.ndarray:
    """1 where the mask is strictly above 0.5, else 0 (exact ties round down)."""
    return (np.asarray(mask) > 0.5).astype(np.float64)


def is_binarized(mask: np.ndarray, tol: float) -> bool:
    mask = np.asarray(mask)
    return bool(np.all(np.minimum(mask, 1.0 - mask) <= tol))


def apply_perturbation(x: np.ndarray, delta: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """clamp(x + delta * mask, 0, 1)."""
    return np.clip(x + delta * mask, 0.0, 1.0)
