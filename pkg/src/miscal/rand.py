"""Deterministic random streams.

Everything random in the package flows through `stream`, which builds a
numpy Generator from a 64-bit seed plus integer tags. Tagging lets callers
derive independent substreams (one per example, per epoch, ...) so results
never depend on how work is batched or parallelized.
"""

import numpy as np

_MASK = (1 << 64) - 1


def stream(seed: int, *tags: int) -> np.random.Generator:
    """Generator seeded by (seed, *tags); negative values map to their
    unsigned 64-bit representation."""
    return np.random.default_rng([int(seed) & _MASK, *(int(t) & _MASK for t in tags)])
