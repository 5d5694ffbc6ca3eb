# cavity/seeding.py
import numpy as np


def make_rng(seed) -> np.random.Generator:
    """Counter-based stream for one chain, graph or replica."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def derive_seed(master: int, *keys: int) -> int:
    """64-bit child seed for (master, keys...), independent of scheduling order."""
    state = np.random.SeedSequence([int(master), *[int(k) for k in keys]]).generate_state(1, dtype=np.uint64)
    return int(state[0])
