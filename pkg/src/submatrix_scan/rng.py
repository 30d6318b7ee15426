"""Seeded random streams.

Every randomized routine takes an integer seed (or a ready ``Generator``).
Independent sub-streams are derived from a master seed with
:class:`numpy.random.SeedSequence` spawn keys: the stream for a task is
``SeedSequence(entropy=master, spawn_key=key)`` where ``key`` is a tuple of
non-negative integers naming the task, e.g. ``(method, theta_index,
replicate)``.  The stream depends only on ``(master, key)``, never on the
order in which tasks run.
"""

from __future__ import annotations

import numpy as np

DEFAULT_SEED = 20170101


def substream(master: int, *key: int) -> np.random.Generator:
    """Generator for the sub-stream ``key`` of ``master``."""
    if master < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def subseed(master: int, *key: int) -> int:
    """A 63-bit integer seed for the sub-stream ``key`` of ``master``."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> np.uint64(1))


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        seed = DEFAULT_SEED
    return substream(int(seed))
