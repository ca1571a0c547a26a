"""Counter-based random streams keyed by (seed, purpose, grid index, replication).

Each replication owns an independent Philox stream, so the numbers a
replication sees never depend on how work is split across processes.
"""

import numpy as np

PURPOSES = {
    "risk": 1,
    "stopping": 2,
    "power": 3,
    "lil": 4,
    "consistency": 5,
    "decomposition": 6,
}


def stream(seed: int, purpose: str, grid_index: int, rep: int) -> np.random.Generator:
    key = (PURPOSES[purpose], int(grid_index), int(rep))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))
