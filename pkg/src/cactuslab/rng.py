"""Replica-indexed random streams.

Every replica draws from its own Philox stream keyed by (seed, index...),
so results do not depend on how replicas are split across workers.
"""
import numpy as np


def replica_rng(seed: int, *index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.Philox(ss))
