"""Replay storage partitioned by game id.

Transitions store compact world states rather than entity observations; the
learner rebuilds observations in batch. Storage grows on demand up to the
capacity, after which the oldest item is overwritten.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, fields

import numpy as np

from mra.errors import ContractError


@dataclass
class Transition:
    pos: np.ndarray          # (N, 2)
    vel: np.ndarray
    landmarks: np.ndarray    # (L, 2)
    actions: np.ndarray      # (N,)
    rewards: np.ndarray      # (N,)
    next_pos: np.ndarray
    next_vel: np.ndarray
    next_landmarks: np.ndarray
    graphs: np.ndarray       # (N, N-1), the graph used at action time
    latents: np.ndarray      # (N,) latent class of each agent


FIELDS = tuple(f.name for f in fields(Transition))
_DTYPES = {"actions": np.int64, "latents": np.int64, "graphs": np.float32}


class NotReady(Exception):
    """Fewer stored items than the requested batch."""


class ReplayPartition:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ContractError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._data: dict[str, np.ndarray] | None = None
        self._size = 0
        self._next = 0          # slot the next push writes
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self._size

    def _grow(self, need: int, example: dict) -> None:
        alloc = 0 if self._data is None else len(self._data["actions"])
        if need <= alloc:
            return
        new = min(self.capacity, max(need, 2 * alloc, 64))
        data = {}
        for k, v in example.items():
            arr = np.zeros((new,) + v.shape, dtype=v.dtype)
            if self._data is not None:
                arr[:alloc] = self._data[k]
            data[k] = arr
        self._data = data

    def push_many(self, items: dict) -> None:
        """Append a batch: every field carries a leading axis of equal length."""
        items = {k: np.asarray(items[k], dtype=_DTYPES.get(k, np.float64)) for k in FIELDS}
        n = len(items["actions"])
        with self._lock:
            for j in range(n):
                if self._size < self.capacity:
                    self._grow(self._size + 1, {k: v[0] for k, v in items.items()})
                slot = self._next
                for k, v in items.items():
                    self._data[k][slot] = v[j]
                self._next = (slot + 1) % self.capacity
                self._size = min(self._size + 1, self.capacity)

    def push(self, t: Transition) -> None:
        self.push_many({k: np.asarray(getattr(t, k))[None] for k in FIELDS})

    def _order(self) -> np.ndarray:
        """Storage slots from oldest to newest."""
        if self._size < self.capacity:
            return np.arange(self._size)
        return (self._next + np.arange(self.capacity)) % self.capacity

    def get(self, i: int) -> Transition:
        slot = self._order()[i]
        return Transition(**{k: self._data[k][slot].copy() for k in FIELDS})

    def sample(self, batch_size: int, rng: np.random.Generator, replace: bool = True) -> dict:
        with self._lock:
            if self._size < batch_size or batch_size < 1:
                raise NotReady(f"{self._size} stored, {batch_size} requested")
            if replace:
                idx = rng.integers(0, self._size, size=batch_size)
            else:
                idx = rng.choice(self._size, size=batch_size, replace=False)
            slots = self._order()[idx]
            return {k: self._data[k][slots].copy() for k in FIELDS}


class ReplayBuffer:
    """One FIFO partition per game id."""

    def __init__(self, capacity: int = 100_000, game_ids=()):
        self.capacity = capacity
        self.parts: dict[int, ReplayPartition] = {}
        for g in game_ids:
            self.partition(g)

    def partition(self, game_id: int) -> ReplayPartition:
        if game_id not in self.parts:
            self.parts[game_id] = ReplayPartition(self.capacity)
        return self.parts[game_id]

    def push(self, game_id: int, t: Transition) -> None:
        self.partition(game_id).push(t)

    def push_many(self, game_id: int, items: dict) -> None:
        self.partition(game_id).push_many(items)

    def ready(self, game_id: int, batch_size: int) -> bool:
        return game_id in self.parts and len(self.parts[game_id]) >= batch_size

    def sample(self, game_id: int, batch_size: int, rng: np.random.Generator, replace: bool = True) -> dict:
        if game_id not in self.parts:
            raise NotReady(f"no transitions for game {game_id}")
        return self.parts[game_id].sample(batch_size, rng, replace)

    def __len__(self) -> int:
        return sum(len(p) for p in self.parts.values())
