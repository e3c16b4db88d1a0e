"""Deterministic derivation of child seeds from a root seed."""

from __future__ import annotations

import numpy as np

# stream tags; keep values stable, they are part of the reproducibility contract
DESIGN = 1
ACQUISITION = 2
OPTIMISER = 3
OBJECTIVE = 4


def child_seed(seed: int | None, *keys: int) -> int | None:
    """Stable child seed for a tagged stream, or None if the root is None."""
    if seed is None:
        return None
    ss = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    return int(ss.generate_state(1)[0])
