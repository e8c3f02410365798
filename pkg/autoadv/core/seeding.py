"""Seed splitting.

One global seed expands into independent per-purpose random streams. The
rule is ``SeedSequence(seed, spawn_key=(PURPOSES[purpose], *index))``: each
purpose has a fixed slot, and streams that are drawn per image are further
keyed by the image id. Because no stream is advanced on behalf of another,
asking for more images, or for a different purpose first, never changes the
draws of an existing stream.
"""

import numpy as np

PURPOSES = {
    "dataset": 0,
    "init": 1,
    "delta": 2,
    "images": 3,
    "targets": 4,
    "attack": 5,
    "encoder": 6,
    "subset": 7,
    "batches": 8,
}


def seed_sequence(seed: int, purpose: str, *index: int) -> np.random.SeedSequence:
    if purpose not in PURPOSES:
        raise KeyError(f"unknown random stream purpose '{purpose}'")
    return np.random.SeedSequence(int(seed), spawn_key=(PURPOSES[purpose], *(int(i) for i in index)))


def stream(seed: int, purpose: str, *index: int) -> np.random.Generator:
    """Independent generator for ``purpose`` (and optional per-item ``index``)."""
    return np.random.default_rng(seed_sequence(seed, purpose, *index))


def derive_seed(seed: int, purpose: str, *index: int) -> int:
    """A 32-bit integer seed for a child computation, e.g. one attack instance."""
    return int(seed_sequence(seed, purpose, *index).generate_state(1)[0])
