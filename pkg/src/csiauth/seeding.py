"""Deterministic sub-seed derivation.

Every random draw in the workbench flows from one u64 experiment seed
through a fixed (domain, index) path, so reruns and parallel workers see
identical streams.
"""

import numpy as np

# domain tags; never renumber, serialized experiments depend on them
DOMAIN_TRACE = 1
DOMAIN_PSI = 2
DOMAIN_NOISE = 3
DOMAIN_MODEL = 4
DOMAIN_SHUFFLE = 5


def make_rng(seed, *path):
    """PCG64 generator derived from (seed, *path) integers."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, path)])))
