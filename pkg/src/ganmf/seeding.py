"""Named random substreams so one root seed drives every component independently.

Changing e.g. the batch stream must not perturb the split or the parameter
init, which is why each consumer derives its own stream by label.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["derive_seed", "substream"]


def derive_seed(root: int, label: str) -> np.random.SeedSequence:
    """Deterministic child seed for ``label`` under ``root``."""
    return np.random.SeedSequence([int(root), zlib.crc32(label.encode("utf-8"))])


def substream(root: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, label))
