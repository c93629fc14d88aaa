"""Named, splittable random streams.

Every stochastic call site asks for its own stream by name, e.g.
``streams(seed, "rollout", game_id, episode)``. Streams are Philox
(counter-based) generators keyed by a hash of the seed and the name path,
so the numbers a call site sees never depend on how many draws other call
sites made, or on how work is split across threads.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _key(seed: int, names: tuple) -> int:
    text = "/".join([str(int(seed))] + [str(n) for n in names])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "little")


def stream(seed: int, *names) -> np.random.Generator:
    """Return an independent generator for the name path under ``seed``."""
    return np.random.Generator(np.random.Philox(key=_key(seed, names)))


class Streams:
    """A seed bound to a name prefix; ``child`` splits, ``get`` materializes."""

    def __init__(self, seed: int, prefix: tuple = ()):
        self.seed = int(seed)
        self.prefix = tuple(prefix)

    def child(self, *names) -> "Streams":
        return Streams(self.seed, self.prefix + names)

    def get(self, *names) -> np.random.Generator:
        return stream(self.seed, *(self.prefix + names))

    def __repr__(self) -> str:
        return f"Streams(seed={self.seed}, prefix={self.prefix!r})"
