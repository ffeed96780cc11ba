"""Reproducible counter-based random streams.

Every block of paths draws from its own Philox stream keyed by
``(seed, stream_id)``.  Streams never share state, so results do not depend
on which worker runs which block or in what order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Identifies one independent random stream.

    Attributes
    ----------
    seed : int
        Master seed (64-bit).
    stream_id : int
        Index of the stream (block index for batched runs, path index for
        single-path runs).
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")

    def generator(self) -> np.random.Generator:
        # SeedSequence mixes (seed, stream_id) into a Philox key; the Philox
        # counter then starts at zero for every stream.
        ss = np.random.SeedSequence([self.seed & _MASK64, self.stream_id])
        return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *labels: int | str) -> int:
    """Deterministically derive a child seed from a parent seed and labels.

    Used to give sub-experiments (probes, radii, pipelines) statistically
    independent seeds without consuming any stream.
    """
    words = [seed & _MASK64]
    for lab in labels:
        if isinstance(lab, str):
            words.extend(lab.encode("utf-8"))
        else:
            words.append(int(lab) & _MASK64)
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0])
