"""Deterministic random streams derived from a single experiment seed.

Every source of randomness in the library draws from a stream obtained via
:func:`stream`, keyed by the top-level seed plus a path of labels.  Streams
are backed by the counter-based Philox generator, so results do not depend
on the order in which independent tasks consume their streams.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream", "spawn_seeds"]


def _as_key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"stream path entries must be int or str, got {type(part).__name__}")


def stream(seed: int, *path) -> np.random.Generator:
    """Return an independent generator for (seed, *path).

    The same arguments always yield the same stream; distinct paths yield
    statistically independent streams.
    """
    entropy = (int(seed),) + tuple(_as_key(p) for p in path)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def spawn_seeds(seed: int, n: int, *path) -> list[int]:
    """Derive ``n`` child seeds for per-task streams (e.g. one per trial)."""
    rng = stream(seed, *path)
    return [int(x) for x in rng.integers(0, 2**63 - 1, size=n)]
