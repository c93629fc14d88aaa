"""Finite Markov games small enough for exact equilibrium computations.

Text format (whitespace separated, ``#`` starts a comment)::

    n_states n_agents
    a_1 ... a_N          # action counts
    gamma
    P[s, a_1..a_N, s']   # row-major, n_states * prod(a) * n_states numbers
    R[i, s, a_1..a_N]    # row-major, N * n_states * prod(a) numbers
    [roles r_1 ... r_N]  # optional line starting with the word "roles"
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mra.errors import ContractError


@dataclass
class TabularMG:
    P: np.ndarray                     # (S, A_1, ..., A_N, S)
    R: np.ndarray                     # (N, S, A_1, ..., A_N)
    gamma: float
    roles: tuple = ()
    name: str = ""
    reward_bounds: tuple = field(default=(-np.inf, np.inf))

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        if self.P.ndim < 3 or self.P.shape[0] != self.P.shape[-1]:
            raise ContractError(f"transition tensor has bad shape {self.P.shape}")
        n = self.P.ndim - 2
        if self.R.shape != (n,) + self.P.shape[:-1]:
            raise ContractError(f"reward tensor shape {self.R.shape} does not match transitions")
        if np.any(self.P < -1e-12) or not np.allclose(self.P.sum(-1), 1.0, atol=1e-9):
            raise ContractError("transition rows must be probability distributions")
        lo, hi = self.reward_bounds
        if np.any(self.R < lo - 1e-12) or np.any(self.R > hi + 1e-12):
            raise ContractError(f"rewards outside declared bounds {self.reward_bounds}")
        if not 0.0 <= self.gamma:
            raise ContractError("gamma must be >= 0")
        if not self.roles:
            self.roles = tuple(range(n))
        if len(self.roles) != n:
            raise ContractError("one role label per agent")

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_agents(self) -> int:
        return self.P.ndim - 2

    @property
    def n_actions(self) -> tuple:
        return self.P.shape[1:-1]

    def rewards_in_unit_interval(self) -> bool:
        return bool(np.all(self.R >= -1e-12) and np.all(self.R <= 1 + 1e-12))

    # -- text I/O ----------------------------------------------------------
    def to_text(self) -> str:
        lines = [f"# {self.name}" if self.name else "# tabular markov game",
                 f"{self.n_states} {self.n_agents}",
                 " ".join(str(a) for a in self.n_actions),
                 repr(float(self.gamma)),
                 " ".join(repr(float(x)) for x in self.P.ravel()),
                 " ".join(repr(float(x)) for x in self.R.ravel())]
        if tuple(self.roles) != tuple(range(self.n_agents)):
            lines.append("roles " + " ".join(str(r) for r in self.roles))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, name: str = "") -> "TabularMG":
        tokens, roles = [], ()
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("roles"):
                roles = tuple(int(x) for x in line.split()[1:])
                continue
            tokens.extend(line.split())
        try:
            s, n = int(tokens[0]), int(tokens[1])
            acts = tuple(int(x) for x in tokens[2:2 + n])
            gamma = float(tokens[2 + n])
            vals = np.array([float(x) for x in tokens[3 + n:]])
        except (IndexError, ValueError) as exc:
            raise ContractError(f"malformed tabular game text: {exc}") from exc
        joint = int(np.prod(acts))
        n_p, n_r = s * joint * s, n * s * joint
        if vals.size != n_p + n_r:
            raise ContractError(f"expected {n_p + n_r} table entries, found {vals.size}")
        P = vals[:n_p].reshape((s,) + acts + (s,))
        R = vals[n_p:].reshape((n, s) + acts)
        return cls(P, R, gamma, roles, name)

    @classmethod
    def load(cls, path) -> "TabularMG":
        path = Path(path)
        return cls.from_text(path.read_text(), name=path.stem)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())


def matching_pennies(gamma: float = 0.0) -> TabularMG:
    """Agent 0 wants to match, agent 1 to mismatch; action 0 is Heads."""
    R0 = np.array([[1.0, -1.0], [-1.0, 1.0]])
    R = np.stack([R0, -R0])[:, None]
    P = np.ones((1, 2, 2, 1))
    return TabularMG(P, R, gamma, name="matching_pennies")


def coordination_game(scale: float = 1.0, gamma: float = 0.0) -> TabularMG:
    R0 = scale * np.array([[1.0, 0.0], [0.0, 0.5]])
    R = np.stack([R0, R0])[:, None]
    return TabularMG(np.ones((1, 2, 2, 1)), R, gamma, roles=(0, 0), name=f"coordination_x{scale}")


def random_game(rng: np.random.Generator, n_states: int = 3, n_agents: int = 2,
                n_actions: int | tuple = 2, gamma: float = 0.9, sparsity: float = 0.0) -> TabularMG:
    """Random game with rewards in [0, 1] and Dirichlet transitions."""
    acts = (n_actions,) * n_agents if isinstance(n_actions, int) else tuple(n_actions)
    shape = (n_states,) + acts
    P = rng.dirichlet(np.ones(n_states), size=shape)
    if sparsity > 0:
        mask = rng.random(P.shape) < sparsity
        P = np.where(mask, 0.0, P) + 1e-12
        P /= P.sum(-1, keepdims=True)
    R = rng.random((n_agents,) + shape)
    return TabularMG(P, R, gamma, name="random", reward_bounds=(0.0, 1.0))
