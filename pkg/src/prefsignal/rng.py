"""Seeded, counter-based random streams.

Every Monte-Carlo routine in the package draws from a Philox4x64-10
generator keyed by ``SeedSequence(seed, spawn_key=(chunk, ...))``. Work is
split into fixed-size chunks, each with its own derived stream, so results
depend only on ``(seed, n)`` and never on how chunks are scheduled.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

RNG_ALGORITHM = "numpy.Philox4x64-10/SeedSequence(seed, spawn_key=chunk)"
DEFAULT_CHUNK = 1 << 15

T = TypeVar("T")


class SeedRequiredError(ValueError):
    pass


def require_seed(seed: int | None) -> int:
    if seed is None:
        raise SeedRequiredError("a seed is required for reproducible Monte-Carlo output")
    return int(seed)


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream identified by ``seed`` and the integer ``key`` path."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def chunk_sizes(n: int, chunk: int = DEFAULT_CHUNK) -> list[int]:
    full, rest = divmod(n, chunk)
    return [chunk] * full + ([rest] if rest else [])


def run_chunks(fn: Callable[..., T], args: Iterable[Sequence], workers: int = 1) -> list[T]:
    """Apply ``fn(*a)`` to every argument tuple; output order follows input order."""
    args = list(args)
    if workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*args)))
