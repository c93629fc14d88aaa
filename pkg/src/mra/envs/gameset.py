from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from mra.errors import ContractError

ENV_KINDS = ("treasure", "resource", "pacman", "tabular")
ROLE_NAMES = {
    "treasure": ("collector",),
    "resource": ("occupant",),
    "pacman": ("pacman", "ghost"),
}
DEFAULT_LANDMARKS = {"treasure": 2, "resource": 3, "pacman": 3}


@dataclass(frozen=True)
class GameSpec:
    """One population instance of an environment.

    ``populations`` holds one count per role, in role order; agents are indexed
    role-block by role-block, which is also the canonical entity order.
    """

    env_kind: str
    populations: tuple
    horizon: int = 20
    landmarks: int | None = None
    sparse: bool = False
    game_id: int = 0

    def __post_init__(self):
        if self.env_kind not in ENV_KINDS:
            raise ContractError(f"unknown env_kind {self.env_kind!r}")
        pops = tuple(int(p) for p in np.atleast_1d(self.populations))
        object.__setattr__(self, "populations", pops)
        if any(p < 1 for p in pops):
            raise ContractError(f"every population must be >= 1, got {pops}")
        if self.horizon < 1:
            raise ContractError("horizon must be >= 1")
        roles = ROLE_NAMES.get(self.env_kind)
        if roles is not None and len(pops) != len(roles):
            raise ContractError(f"{self.env_kind} needs {len(roles)} role counts, got {pops}")
        if self.landmarks is None and self.env_kind in DEFAULT_LANDMARKS:
            object.__setattr__(self, "landmarks", DEFAULT_LANDMARKS[self.env_kind])

    @property
    def n_agents(self) -> int:
        return sum(self.populations)

    @property
    def n_roles(self) -> int:
        return len(self.populations)

    @property
    def roles(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_roles), self.populations)

    def role_agents(self, role: int) -> np.ndarray:
        return np.flatnonzero(self.roles == role)

    @property
    def resource_sizes(self) -> np.ndarray:
        if self.env_kind != "resource":
            return np.zeros(0)
        return 0.1 * np.arange(1, self.landmarks + 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["populations"] = list(self.populations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GameSpec":
        return cls(**{**d, "populations": tuple(d["populations"])})


@dataclass(frozen=True)
class GameSet:
    games: tuple = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.games)

    def __iter__(self) -> Iterator[GameSpec]:
        return iter(self.games)

    def __getitem__(self, i: int) -> GameSpec:
        return self.games[i]

    @property
    def env_kind(self) -> str:
        return self.games[0].env_kind

    @property
    def n_roles(self) -> int:
        return self.games[0].n_roles

    def to_dict(self) -> dict:
        return {"games": [g.to_dict() for g in self.games]}

    @classmethod
    def from_dict(cls, d: dict) -> "GameSet":
        return cls(tuple(GameSpec.from_dict(g) for g in d["games"]))


def make_game_set(env_kind: str, population_lists: Sequence, horizon: int = 20,
                  landmarks: int | None = None, sparse: bool = False) -> GameSet:
    """Ordered game specs with ``game_id`` equal to list position."""
    if not population_lists:
        raise ContractError("population list must be nonempty")
    pops = [tuple(int(x) for x in np.atleast_1d(p)) for p in population_lists]
    if len(set(pops)) != len(pops):
        warnings.warn(f"duplicate populations in game set: {pops}", stacklevel=2)
    return GameSet(tuple(GameSpec(env_kind, p, horizon, landmarks, sparse, game_id=i)
                         for i, p in enumerate(pops)))


def with_game_id(spec: GameSpec, game_id: int) -> GameSpec:
    return replace(spec, game_id=game_id)
