"""Particle worlds: treasure collection, resource occupation, Pac-Man-like.

Point-mass dynamics with five discrete actions. States are immutable value
objects; ``step`` returns a fresh state.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mra.envs.gameset import GameSpec
from mra.errors import ContractError

N_ACTIONS = 5
# stay, up, down, left, right
ACTION_DIRS = np.array([[0, 0], [0, 1], [0, -1], [-1, 0], [1, 0]], dtype=np.float64)


@dataclass(frozen=True)
class Physics:
    dt: float = 0.1
    damping: float = 0.25
    accel: float = 1.0
    max_speed: float = 1.0
    bound: float = 1.2
    agent_radius: float = 0.05
    item_radius: float = 0.05
    treasure_shaping: float = 0.1
    food_shaping: float = 0.05
    food_reward: float = 1.0
    catch_penalty: float = 5.0
    catch_reward: float = 5.0


@dataclass
class WorldState:
    pos: np.ndarray
    vel: np.ndarray
    landmarks: np.ndarray
    sizes: np.ndarray
    t: int = 0
    # per-agent event counts from the last step: "score" is the
    # unshaped task score (treasures, occupancy value, food or catches)
    events: dict = field(default_factory=dict)

    def copy(self) -> "WorldState":
        return WorldState(self.pos.copy(), self.vel.copy(), self.landmarks.copy(), self.sizes.copy(),
                          self.t, {k: v.copy() for k, v in self.events.items()})


@dataclass
class EntityObservation:
    """Egocentric view of one agent: its own entity and one row per other agent."""

    self_entity: np.ndarray
    other_entities: np.ndarray

    @property
    def width(self) -> int:
        return self.self_entity.shape[-1]


@dataclass
class JointObservation:
    """All agents' views: ``self_entities`` (N, F), ``other_entities`` (N, N-1, F)."""

    self_entities: np.ndarray
    other_entities: np.ndarray

    def agent(self, i: int) -> EntityObservation:
        return EntityObservation(self.self_entities[i], self.other_entities[i])


def entity_width(spec: GameSpec) -> int:
    extra = spec.landmarks if spec.env_kind == "resource" else 0
    return 4 + spec.n_roles + 2 * spec.landmarks + extra


def others_index(n: int) -> np.ndarray:
    """Row i lists every j != i in increasing order."""
    idx = np.array([[j for j in range(n) if j != i] for i in range(n)], dtype=np.int64)
    return idx.reshape(n, max(n - 1, 0))


def observe_all(pos, vel, landmarks, sizes, roles, n_roles: int):
    """Entity features for every agent; leading batch axes are preserved.

    pos, vel: (..., N, 2); landmarks: (..., L, 2); sizes: (L,) or empty.
    Returns self (..., N, F) and others (..., N, N-1, F) as float32.
    """
    pos = np.asarray(pos, dtype=np.float64)
    vel = np.asarray(vel, dtype=np.float64)
    landmarks = np.asarray(landmarks, dtype=np.float64)
    n = pos.shape[-2]
    batch = pos.shape[:-2]
    onehot = np.eye(n_roles)[roles]                                   # (N, R)
    onehot = np.broadcast_to(onehot, batch + onehot.shape)
    rel_lm = landmarks[..., None, :, :] - pos[..., :, None, :]        # (..., N, L, 2)
    lm_feat = rel_lm.reshape(batch + (n, -1))
    parts_extra = []
    if len(sizes):
        parts_extra = [np.broadcast_to(np.asarray(sizes, dtype=np.float64), batch + (n, len(sizes)))]
    base = np.concatenate([onehot, lm_feat] + parts_extra, axis=-1)  # per-entity env features
    self_feat = np.concatenate([pos, vel, base], axis=-1)
    idx = others_index(n)
    rel_p = pos[..., idx, :] - pos[..., :, None, :]
    rel_v = vel[..., idx, :] - vel[..., :, None, :]
    other_feat = np.concatenate([rel_p, rel_v, base[..., idx, :]], axis=-1)
    return self_feat.astype(np.float32), other_feat.astype(np.float32)


class ParticleEnv:
    def __init__(self, spec: GameSpec, physics: Physics | None = None):
        if spec.env_kind not in ("treasure", "resource", "pacman"):
            raise ContractError(f"{spec.env_kind} is not a particle world")
        self.spec = spec
        self.physics = physics or Physics()
        self.roles = spec.roles
        self.n = spec.n_agents
        self.width = entity_width(spec)

    # -- lifecycle ---------------------------------------------------------
    def reset(self, rng: np.random.Generator) -> tuple[WorldState, JointObservation]:
        spec = self.spec
        pos = rng.uniform(-1.0, 1.0, size=(self.n, 2))
        landmarks = rng.uniform(-1.0, 1.0, size=(spec.landmarks, 2))
        state = WorldState(pos, np.zeros((self.n, 2)), landmarks, spec.resource_sizes.copy(), 0,
                           {"score": np.zeros(self.n)})
        return state, self.observe_joint(state)

    def observe_joint(self, state: WorldState) -> JointObservation:
        s, o = observe_all(state.pos, state.vel, state.landmarks, state.sizes, self.roles,
                           self.spec.n_roles)
        return JointObservation(s, o)

    def observe(self, state: WorldState, agent: int) -> EntityObservation:
        if not 0 <= agent < self.n:
            raise ContractError(f"agent {agent} out of range for {self.n} agents")
        return self.observe_joint(state).agent(agent)

    def step(self, state: WorldState, actions, rng: np.random.Generator):
        """Advance one step; returns (state', joint observation, rewards)."""
        actions = np.asarray(actions, dtype=np.int64)
        if actions.shape != (self.n,):
            raise ContractError(f"expected {self.n} actions, got shape {actions.shape}")
        if np.any((actions < 0) | (actions >= N_ACTIONS)):
            raise ContractError(f"action out of range: {actions}")
        if state.t >= self.spec.horizon:
            raise ContractError(f"episode already ran its {self.spec.horizon} steps")
        ph = self.physics
        vel = state.vel * (1.0 - ph.damping) + ph.accel * ACTION_DIRS[actions] * ph.dt
        speed = np.linalg.norm(vel, axis=-1, keepdims=True)
        vel = np.where(speed > ph.max_speed, vel * ph.max_speed / np.maximum(speed, 1e-12), vel)
        pos = np.clip(state.pos + vel * ph.dt, -ph.bound, ph.bound)
        new = WorldState(pos, vel, state.landmarks.copy(), state.sizes, state.t + 1, {})
        rewards = getattr(self, f"_reward_{self.spec.env_kind}")(new, rng)
        return new, self.observe_joint(new), rewards

    def done(self, state: WorldState) -> bool:
        return state.t >= self.spec.horizon

    # -- rewards -----------------------------------------------------------
    def _touch_items(self, state: WorldState, who: np.ndarray):
        """Agents in ``who`` touching each landmark; returns bool (N, L) and distances."""
        ph = self.physics
        d = np.linalg.norm(state.pos[:, None, :] - state.landmarks[None, :, :], axis=-1)
        touch = (d < ph.agent_radius + ph.item_radius) & who[:, None]
        return touch, d

    def _regenerate(self, state: WorldState, touched: np.ndarray, rng: np.random.Generator) -> None:
        for k in np.flatnonzero(touched):
            state.landmarks[k] = rng.uniform(-1.0, 1.0, size=2)

    def _reward_treasure(self, state: WorldState, rng) -> np.ndarray:
        touch, d = self._touch_items(state, np.ones(self.n, dtype=bool))
        score = touch.sum(axis=1).astype(np.float64)
        reward = score.copy()
        if not self.spec.sparse:
            reward -= self.physics.treasure_shaping * d.min(axis=1)
        self._regenerate(state, touch.any(axis=0), rng)
        state.events = {"score": score}
        return reward

    def _reward_resource(self, state: WorldState, rng) -> np.ndarray:
        d = np.linalg.norm(state.pos[:, None, :] - state.landmarks[None, :, :], axis=-1)
        inside = d < state.sizes[None, :]
        crowd = inside.sum(axis=0)                                     # agents per resource
        value = np.where(inside, state.sizes[None, :] / np.maximum(crowd, 1)[None, :], 0.0)
        reward = value.max(axis=1) if value.shape[1] else np.zeros(self.n)
        state.events = {"score": reward.copy()}
        return reward

    def _reward_pacman(self, state: WorldState, rng) -> np.ndarray:
        ph = self.physics
        pac = self.roles == 0
        ghost = ~pac
        touch, d = self._touch_items(state, pac)
        food = touch.sum(axis=1).astype(np.float64)
        dd = np.linalg.norm(state.pos[:, None, :] - state.pos[None, :, :], axis=-1)
        contact = (dd < 2 * ph.agent_radius) & ghost[:, None] & pac[None, :]   # ghost x pacman
        caught = contact.sum(axis=0).astype(np.float64)                # per pacman
        catches = contact.sum(axis=1).astype(np.float64)               # per ghost
        reward = np.where(pac, ph.food_reward * food - ph.catch_penalty * caught,
                          ph.catch_reward * catches)
        if not self.spec.sparse:
            reward = reward - np.where(pac, ph.food_shaping * d.min(axis=1), 0.0)
        self._regenerate(state, touch.any(axis=0), rng)
        state.events = {"score": np.where(pac, food, catches), "caught": caught}
        return reward


def reset(spec: GameSpec, rng: np.random.Generator):
    return ParticleEnv(spec).reset(rng)


def step(spec: GameSpec, state: WorldState, joint_action, rng: np.random.Generator):
    return ParticleEnv(spec).step(state, joint_action, rng)


def observe(spec: GameSpec, state: WorldState, agent: int) -> EntityObservation:
    return ParticleEnv(spec).observe(state, agent)
