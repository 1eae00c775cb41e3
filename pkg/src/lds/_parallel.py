"""Deterministic seeding and ordered parallel map."""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def derive_seed(root: int, *path) -> int:
    """Stable 64-bit seed from a root seed and a task path.

    Independent of worker count and scheduling, so partitioned work reproduces
    bit for bit.
    """
    key = "/".join([str(int(root))] + [str(p) for p in path]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def chunk_generators(seed: int, total: int, chunk: int) -> list[tuple[np.random.Generator, int]]:
    """Split ``total`` draws into fixed-size chunks, each with its own child stream."""
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    return [(np.random.default_rng(ss), size) for ss, size in zip(children, sizes)]


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    try:
        return max(1, int(os.environ.get("LDS_THREADS", "1")))
    except ValueError:
        return 1


def map_ordered(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """``[fn(x) for x in items]``, optionally on a thread pool; output order is input order."""
    items: Sequence[T] = list(items)
    n = worker_count(workers)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
