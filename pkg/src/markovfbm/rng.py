"""Counter-based random streams with a fixed layout.

Paths are grouped into blocks of :data:`PATH_BLOCK` rows.  Each
``(seed, purpose, block)`` triple gets its own Philox key and each time step
its own counter range, so the numbers a path sees depend only on the seed,
its index and the step, never on how many paths or workers there are.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

PATH_BLOCK = 4096

# purposes
DRIVER = 0  # Brownian increments shared by every vol source (common random numbers)
RESIDUAL = 1  # OU increment components orthogonal to the driver
ORACLE = 2  # exact Volterra samples
JOINT = 3  # joint terminal error sampling


def check_seed(seed) -> int:
    if isinstance(seed, bool) or int(seed) != seed or not (0 <= int(seed) < 2 ** 64):
        raise ValueError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return int(seed)


@lru_cache(maxsize=4096)
def _key(seed: int, purpose: int, block: int) -> tuple:
    ss = np.random.SeedSequence(seed, spawn_key=(purpose, block))
    return tuple(int(v) for v in ss.generate_state(2, np.uint64))


def stream(seed: int, purpose: int, block: int, step: int = 0) -> np.random.Generator:
    key = np.array(_key(seed, purpose, block), dtype=np.uint64)
    counter = np.array([0, step, 0, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def normals(seed: int, purpose: int, block: int, step: int, cols: int) -> np.ndarray:
    """A full ``(PATH_BLOCK, cols)`` draw; callers slice off unused rows."""
    return stream(seed, purpose, block, step).standard_normal((PATH_BLOCK, cols))


def blocks(N: int):
    """Yield ``(block index, first row, row count)`` covering ``N`` paths."""
    for b, start in enumerate(range(0, N, PATH_BLOCK)):
        yield b, start, min(PATH_BLOCK, N - start)
