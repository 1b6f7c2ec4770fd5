"""Derivation of independent random sub-streams from one run seed.

Every randomized component of a run draws from its own child seed so the
components stay individually reproducible. The spawn order is fixed:

    experiment run seed -> [split, svd, train]
    train seed          -> [param init, m0 draws]
"""

from __future__ import annotations

import numpy as np


def spawn_seeds(seed: int, count: int) -> list[int]:
    """Derive `count` independent child seeds from `seed`, in a fixed order."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1)[0]) for child in children]
