from __future__ import annotations

import numpy as np

_COMPONENT = {"re": 0, "im": 1}


def _entropy(seed: int, *words: int) -> list[int]:
    # SeedSequence wants non-negative words
    return [int(seed)] + [int(w) + (1 << 31) for w in words]


def mode_stream(seed: int, k1: int, k2: int, component: str) -> np.random.Generator:
    ss = np.random.SeedSequence(_entropy(seed, 0, k1, k2, _COMPONENT[component]))
    return np.random.Generator(np.random.Philox(ss))


def replica_stream(seed: int, tag: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(_entropy(seed, 1, tag, index))
    return np.random.Generator(np.random.Philox(ss))


def chunk_sizes(total: int, chunk: int) -> list[int]:
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes
