"""Perturbation norms and the derived percentages reported for every attack."""

import numpy as np

from ..core.exceptions import ContractError
from ..core.models import Norms

L0_TOLERANCE = 1e-12


def norms(v: np.ndarray) -> Norms:
    """l0 (entries with |v_i| > 1e-12), l1, l2 and l-infinity norms of ``v``."""
    flat = np.abs(np.asarray(v, dtype=np.float64)).reshape(-1)
    if flat.size == 0:
        return Norms(0, 0.0, 0.0, 0.0)
    return Norms(
        l0=int(np.count_nonzero(flat > L0_TOLERANCE)),
        l1=float(flat.sum()),
        l2=float(np.sqrt(np.sum(flat * flat))),
        linf=float(flat.max()),
    )


def pixel_fraction(l0: float, n: int) -> float:
    """Percentage of the n components that are perturbed, rounded to 2 decimals."""
    if n <= 0:
        raise ContractError(f"component count must be positive, got {n}")
    return round(100.0 * l0 / n, 2)


def growth_rate(t_small: float, t_large: float) -> float:
    """Percentage increase of the per-image time from the small to the large problem, 2 decimals."""
    if t_small <= 0:
        raise ContractError(f"reference time must be positive, got {t_small}")
    return round(100.0 * (t_large - t_small) / t_small, 2)
