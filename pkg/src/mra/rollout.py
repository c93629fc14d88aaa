"""Lockstep rollouts of P copies of one particle game.

All copies step together against the same parameter snapshot. Every agent
holds a latent class for the whole episode; its graph is recomputed from the
current observation at each step.
"""
from __future__ import annotations

import json

import numpy as np

from mra.agents import policy_act
from mra.autodiff.nn import ParamSet
from mra.envs import GameSpec, ParticleEnv
from mra.envs.particle import observe_all
from mra.relnet import ModelConfig, generate_graph


def joint_obs(spec: GameSpec, pos, vel, landmarks):
    return observe_all(pos, vel, landmarks, spec.resource_sizes, spec.roles, spec.n_roles)


def act(ps: ParamSet, spec: GameSpec, model: ModelConfig, self_feat, others, latents,
        rng: np.random.Generator, mode: str = "sample"):
    """Actions (..., N) and graphs (..., N, N-1) for every agent.

    ``latents`` holds integer latent classes (..., N).
    """
    z = np.eye(model.n_latent, dtype=np.float32)[latents]
    actions = np.zeros(latents.shape, dtype=np.int64)
    graphs = np.zeros(others.shape[:-1], dtype=np.float32)
    for r in range(spec.n_roles):
        idx = spec.role_agents(r)
        g = generate_graph(self_feat[..., idx, :], others[..., idx, :, :], z[..., idx, :], ps, r, model).data
        a, _ = policy_act(ps, r, self_feat[..., idx, :], others[..., idx, :, :], g, rng, mode)
        actions[..., idx] = a
        graphs[..., idx, :] = g
    return actions, graphs


class Lockstep:
    """P episodes of ``spec`` advanced one step at a time."""

    def __init__(self, spec: GameSpec, env_rngs, latents: np.ndarray):
        self.spec = spec
        self.env = ParticleEnv(spec)
        self.rngs = list(env_rngs)
        self.states = [self.env.reset(r)[0] for r in self.rngs]
        self.latents = np.asarray(latents, dtype=np.int64)           # (P, N)
        p, n = len(self.rngs), spec.n_agents
        self.returns = np.zeros((p, n))
        self.scores = np.zeros((p, n))
        self.t = 0

    @property
    def done(self) -> bool:
        return self.t >= self.spec.horizon

    def arrays(self):
        return (np.stack([s.pos for s in self.states]), np.stack([s.vel for s in self.states]),
                np.stack([s.landmarks for s in self.states]))

    def step(self, ps: ParamSet, model: ModelConfig, rng: np.random.Generator, mode: str = "sample") -> dict:
        """Advance every copy; returns the batch of transitions (leading axis P)."""
        pos, vel, lm = self.arrays()
        s, o = joint_obs(self.spec, pos, vel, lm)
        actions, graphs = act(ps, self.spec, model, s, o, self.latents, rng, mode)
        rewards = np.zeros(self.returns.shape)
        for k, (st, r) in enumerate(zip(self.states, self.rngs)):
            new, _, rew = self.env.step(st, actions[k], r)
            self.states[k] = new
            rewards[k] = rew
            self.scores[k] += new.events["score"]
        self.returns += rewards
        self.t += 1
        npos, nvel, nlm = self.arrays()
        return {"pos": pos, "vel": vel, "landmarks": lm, "actions": actions, "rewards": rewards,
                "next_pos": npos, "next_vel": nvel, "next_landmarks": nlm, "graphs": graphs,
                "latents": self.latents.copy()}

    def role_means(self, values: np.ndarray) -> np.ndarray:
        """Per-episode mean over each role's agents, (P, R)."""
        return np.stack([values[:, self.spec.role_agents(r)].mean(axis=1) for r in range(self.spec.n_roles)], 1)


def run_episodes(ps: ParamSet, spec: GameSpec, model: ModelConfig, env_rngs, latents, act_rng,
                 mode: str = "sample"):
    """Play whole episodes without learning; returns per-episode role returns and scores."""
    lock = Lockstep(spec, env_rngs, latents)
    while not lock.done:
        lock.step(ps, model, act_rng, mode)
    return lock.role_means(lock.returns), lock.role_means(lock.scores)


def dump_trajectories(ps: ParamSet, spec: GameSpec, model: ModelConfig, env_rngs, latents, act_rng, path,
                      mode: str = "sample") -> None:
    """Write one JSONL record per (episode, step): positions, actions and rewards."""
    lock = Lockstep(spec, env_rngs, latents)
    with open(path, "w") as f:
        while not lock.done:
            t = lock.t
            tr = lock.step(ps, model, act_rng, mode)
            for k in range(len(lock.rngs)):
                f.write(json.dumps({"episode": k, "t": t, "roles": spec.roles.tolist(),
                                    "pos": tr["pos"][k].tolist(), "vel": tr["vel"][k].tolist(),
                                    "landmarks": tr["landmarks"][k].tolist(),
                                    "actions": tr["actions"][k].tolist(),
                                    "rewards": tr["rewards"][k].tolist()}) + "\n")
