"""Counter-based random streams keyed by (base_seed, stream, index)."""
from __future__ import annotations

import numpy as np

TRAJECTORY_STREAM = 0
_SCALE = 2.0**-53


def uniforms(base_seed: int, index: int, n: int, stream: int = TRAJECTORY_STREAM) -> np.ndarray:
    """n uniforms in [0, 1) that depend only on (base_seed, stream, index).

    Longer requests extend shorter ones: the first k values never change.
    """
    words = np.random.SeedSequence(int(base_seed), spawn_key=(int(stream), int(index))).generate_state(
        n, np.uint64
    )
    return (words >> np.uint64(11)).astype(np.float64) * _SCALE


def uniform_block(base_seed: int, indices, n: int, stream: int = TRAJECTORY_STREAM) -> np.ndarray:
    indices = np.asarray(indices)
    out = np.empty((indices.size, n))
    for row, k in enumerate(indices):
        out[row] = uniforms(base_seed, k, n, stream)
    return out


def stream_rng(base_seed: int, *key: int) -> np.random.Generator:
    """Sequential generator for a named sub-stream of `base_seed`."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(base_seed), spawn_key=key)))
