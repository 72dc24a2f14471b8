"""Seeded, counter-based random streams.

Every stochastic step (recording phases and noise, dataset order, splits, feature
subsampling in the classifier) draws from a Philox generator keyed by a seed plus
a spawn key. Streams therefore depend only on their key, never on the order in
which work runs, so parallel and serial runs produce identical results.
"""

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for `seed`, optionally on a numbered sub-stream."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(stream)))
    )


def derive_seed(seed: int, *stream: int) -> int:
    """A 32-bit seed hashed from (seed, stream...)."""
    seq = np.random.SeedSequence(seed, spawn_key=tuple(stream))
    return int(seq.generate_state(1, dtype=np.uint32)[0])
