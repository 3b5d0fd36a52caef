"""Deterministic per-replication random streams.

Every replication derives its generator from (master_seed, rep_index), so
aggregated results are bit-identical regardless of how replications are
scheduled across workers.
"""

from __future__ import annotations

import numpy as np


def replication_rng(master_seed: int, rep_index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(rep_index)]))
