"""Independent, seed-derived random streams.

Each consumer gets its own stream keyed by a purpose tag (and usually a
client id), so enabling one random feature never shifts the draws of another.
"""

import numpy as np

THETA_INIT = 1
HEAD_INIT = 2
PARTICIPATION = 3
CLASS_ASSIGNMENT = 4
PARTITION = 5
SPLIT = 6
SYNTHETIC = 7
SUBSAMPLE = 8


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))
