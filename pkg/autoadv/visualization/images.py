"""Binary portable graymap/pixmap dumps of attacked images."""

import logging
from pathlib import Path

import numpy as np
from PIL import Image

from ..core.exceptions import DimensionError

logger = logging.getLogger(__name__)

MODES = {1: ("L", ".pgm"), 3: ("RGB", ".ppm")}


def quantize(values: np.ndarray) -> np.ndarray:
    """round(255 * v) as uint8, values clipped to [0, 1] first."""
    return np.rint(255.0 * np.clip(values, 0.0, 1.0)).astype(np.uint8)


def write_pnm(values: np.ndarray, path: str | Path) -> Path:
    """
    Writes an (h, w, c) image with values in [0, 1] as 8-bit P5 (c = 1) or P6 (c = 3).

    Raises:
        DimensionError: For any other channel count.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3 or values.shape[2] not in MODES:
        raise DimensionError(f"can only write (h, w, 1) or (h, w, 3) images, got {values.shape}")
    mode, suffix = MODES[values.shape[2]]
    pixels = quantize(values)
    pixels = np.ascontiguousarray(pixels[:, :, 0] if mode == "L" else pixels)
    path = Path(path)
    if path.suffix != suffix:
        path = path.with_name(path.name + suffix)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels).save(path, format="PPM")
    return path


def read_pnm(path: str | Path) -> np.ndarray:
    """The raw 8-bit pixels of a P5/P6 file, shape (h, w, c)."""
    with Image.open(path) as image:
        pixels = np.asarray(image, dtype=np.uint8)
    return pixels[:, :, None] if pixels.ndim == 2 else pixels


def stretch(values: np.ndarray) -> np.ndarray:
    """Scales by the maximum so the largest entry becomes 1; an all-zero array stays zero."""
    values = np.asarray(values, dtype=np.float64)
    peak = float(values.max()) if values.size else 0.0
    return values / peak if peak > 0 else np.zeros_like(values)


def dump_images(x: np.ndarray, x_adv: np.ndarray, mask: np.ndarray, prefix: str | Path) -> list[Path]:
    """Writes ``<prefix>_orig``, ``_adv``, ``_diff`` (contrast-stretched |x_adv - x|) and ``_mask``."""
    prefix = str(prefix)
    written = [
        write_pnm(x, prefix + "_orig"),
        write_pnm(x_adv, prefix + "_adv"),
        write_pnm(stretch(np.abs(np.asarray(x_adv) - np.asarray(x))), prefix + "_diff"),
        write_pnm(mask, prefix + "_mask"),
    ]
    logger.debug("Wrote %s", ", ".join(p.name for p in written))
    return written
