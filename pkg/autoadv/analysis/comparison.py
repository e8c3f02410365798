"""Comparative tables across attack variants and the ordering checks run on them."""

import logging

from .report import ReportSection

logger = logging.getLogger(__name__)

ASR_ORDER = ("full", "no-encoder", "random")
L0_ORDER = ("full", "no-encoder", "l1-delta", "dense")


def comparison_rows(sections: list[ReportSection]) -> list[dict]:
    """One row per section: ASR and mean norms over all attempts, plus the success-only mean l0."""
    rows = []
    for section in sections:
        agg = section.aggregates
        rows.append({
            "variant": section.name,
            "attempted": agg.attempted,
            "asr": agg.asr,
            "mean_l0": agg.mean_l0,
            "mean_l2": agg.mean_l2,
            "mean_linf": agg.mean_linf,
            "mean_pixel_fraction": agg.mean_pixel_fraction,
            "mean_seconds": agg.mean_seconds,
            "success_mean_l0": section.success_aggregates.mean_l0,
        })
    return rows


def _values(rows: list[dict], key: str, order: tuple[str, ...]) -> list[float] | None:
    by_name = {row["variant"]: row[key] for row in rows}
    values = [by_name.get(name) for name in order]
    if any(v is None for v in values):
        return None
    return values


def asr_order_holds(rows: list[dict]) -> bool | None:
    """ASR(full) >= ASR(no-encoder) >= ASR(random); None if a variant is missing or unattempted."""
    values = _values(rows, "asr", ASR_ORDER)
    if values is None:
        return None
    return all(a >= b for a, b in zip(values, values[1:]))


def l0_order_holds(rows: list[dict]) -> bool | None:
    """Mean l0 strictly increasing over full, no-encoder, l1-delta, dense."""
    values = _values(rows, "mean_l0", L0_ORDER)
    if values is None:
        return None
    return all(a < b for a, b in zip(values, values[1:]))


def asr_gap(rows: list[dict], better: str = "full", worse: str = "random") -> float | None:
    by_name = {row["variant"]: row["asr"] for row in rows}
    if by_name.get(better) is None or by_name.get(worse) is None:
        return None
    return by_name[better] - by_name[worse]


def l0_spread(rows: list[dict]) -> float | None:
    """(max - min) / max of the mean l0 across rows; None without at least one nonzero mean."""
    values = [row["mean_l0"] for row in rows if row["mean_l0"] is not None]
    if not values or max(values) == 0:
        return None
    return (max(values) - min(values)) / max(values)


def ablation_checks(rows: list[dict]) -> dict:
    checks = {
        "asr_order_holds": asr_order_holds(rows),
        "l0_order_holds": l0_order_holds(rows),
        "asr_gap_full_random": asr_gap(rows),
    }
    for name, holds in checks.items():
        if holds is False:
            logger.warning("ablation check %s does not hold", name)
    return checks


def encoder_checks(rows: list[dict], tolerance: float = 0.15) -> dict:
    spread = l0_spread(rows)
    return {"l0_spread": spread, "l0_within_tolerance": None if spread is None else spread <= tolerance}
