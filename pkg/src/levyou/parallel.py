"""Deterministic chunked Monte Carlo over a thread pool.

Work of size ``n`` is cut into fixed-size chunks, each with its own stream
spawned from one master ``SeedSequence``.  Chunk boundaries do not depend on
the worker count, so results are reproducible for any number of workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigurationError

CHUNK = 1 << 14


def default_workers():
    raw = os.environ.get("LEVYOU_WORKERS", "1")
    try:
        w = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"not an integer: {raw!r}", "LEVYOU_WORKERS") from exc
    if w < 1:
        raise ConfigurationError("must be at least 1", "LEVYOU_WORKERS")
    return w


def seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def run_chunked(fn, n, seed, workers=None, chunk=CHUNK, offsets=False):
    """Call ``fn(rng, size)`` on consecutive chunks; return results in chunk order.

    With ``offsets`` the call is ``fn(rng, size, start)`` where ``start`` is
    the index of the chunk's first draw.
    """
    n = int(n)
    sizes = [chunk] * (n // chunk) + ([n % chunk] if n % chunk else [])
    starts = np.cumsum([0] + sizes[:-1]).tolist()
    streams = seed_sequence(seed).spawn(len(sizes))
    jobs = [(np.random.default_rng(s), m) + ((o,) if offsets else ())
            for s, m, o in zip(streams, sizes, starts)]
    workers = workers or default_workers()
    if workers == 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def sub_seed(seed, *path):
    """SeedSequence for a named sub-task, derived from the master seed."""
    ss = seed_sequence(seed)
    key = tuple(int(p) for p in path)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + key)


def stream(seed, *path):
    """A generator for a named sub-task, derived from the master seed."""
    return np.random.default_rng(sub_seed(seed, *path))
