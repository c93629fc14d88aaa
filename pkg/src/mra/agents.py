"""Decentralized policies, centralized attention critics and target averaging.

All networks are per role and shared by the agents of that role. Batches keep
a leading ``(..., N_r)`` layout: entity features for the role's agents, their
other-entity rows and their relational graphs.
"""
from __future__ import annotations

import numpy as np

from mra.autodiff import Tensor, as_tensor, concat, log_softmax, matmul, relu, softmax
from mra.autodiff.nn import ParamSet, add_linear, add_mlp, linear, mlp
from mra.autodiff.tensor import reshape, swapaxes
from mra.errors import ContractError
from mra.relnet import ModelConfig, embed, init_latent, init_relnet


# -- construction ------------------------------------------------------------
def init_policy(ps: ParamSet, role: int, feat: int, cfg: ModelConfig, rng: np.random.Generator) -> None:
    add_mlp(ps, f"policy/{role}", [feat + cfg.width, cfg.hidden, cfg.n_actions], rng, out_scale=0.1)


def init_critic(ps: ParamSet, role: int, feat: int, cfg: ModelConfig, rng: np.random.Generator) -> None:
    h, a = cfg.hidden, cfg.n_actions
    add_linear(ps, f"critic/{role}/self", feat, h, rng)
    ps.add(f"critic/{role}/act", 0.1 * rng.standard_normal((a, h)))
    add_linear(ps, f"critic/{role}/other", feat + a, h, rng)
    add_linear(ps, f"critic/{role}/q", h, h, rng, bias=False)
    add_linear(ps, f"critic/{role}/k", h, h, rng, bias=False)
    add_linear(ps, f"critic/{role}/v", h, h, rng)
    add_mlp(ps, f"critic/{role}/out", [3 * h, h, 1], rng)


def init_model(feat: int, n_roles: int, n_games: int, cfg: ModelConfig, rng: np.random.Generator) -> ParamSet:
    """Every learned parameter: theta (policy, V), phi, zeta, psi."""
    ps = ParamSet()
    for r in range(n_roles):
        init_relnet(ps, r, feat, cfg, rng)
        init_policy(ps, r, feat, cfg, rng)
        init_critic(ps, r, feat, cfg, rng)
        init_latent(ps, r, n_games, cfg)
    return ps


def theta_names(ps: ParamSet, role: int | None = None) -> list[str]:
    roles = [role] if role is not None else sorted({int(k.split("/")[1]) for k in ps.names() if k.startswith("policy/")})
    pre = tuple(p for r in roles for p in (f"policy/{r}/", f"relnet/{r}/v/"))
    return [k for k in ps.names() if k.startswith(pre)]


def zeta_names(ps: ParamSet) -> list[str]:
    return [k for k in ps.names() if k.startswith("critic/")]


def target_names(ps: ParamSet) -> list[str]:
    return theta_names(ps) + zeta_names(ps)


# -- policy ------------------------------------------------------------------
def policy_logits(ps: ParamSet, role: int, self_feat, others, g) -> Tensor:
    """Action logits from [self || e] with e the graph-weighted embedding."""
    self_feat = as_tensor(self_feat)
    e = embed(others, g, ps, role)
    x = concat([self_feat, e], axis=-1)
    return mlp(x, ps, f"policy/{role}", 2)


def policy_act(ps: ParamSet, role: int, self_feat, others, g, rng: np.random.Generator,
               mode: str = "sample") -> tuple[np.ndarray, np.ndarray]:
    """Actions and their log-probabilities (numpy, no gradient)."""
    logp = log_softmax(policy_logits(ps, role, self_feat, others, g), axis=-1).data
    if mode == "greedy":
        a = logp.argmax(axis=-1)
    elif mode == "sample":
        a = sample_categorical(np.exp(logp), rng)
    else:
        raise ContractError(f"unknown action mode {mode!r}")
    return a, np.take_along_axis(logp, a[..., None], axis=-1)[..., 0]


def sample_categorical(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row of ``p`` (last axis) by inverse CDF."""
    c = np.cumsum(p, axis=-1)
    u = rng.random(p.shape[:-1] + (1,)) * c[..., -1:]
    return np.minimum((u >= c).sum(axis=-1), p.shape[-1] - 1)


# -- critic ------------------------------------------------------------------
def critic_all_actions(ps: ParamSet, role: int, self_feat, others, other_actions, g) -> Tensor:
    """Q for each of the agent's own actions, (..., A).

    self_feat (..., F); others (..., M, F); other_actions (..., M, A) one-hot
    (or probabilities); g (..., M) the agent's relational graph.
    """
    pre = f"critic/{role}"
    self_feat, others = as_tensor(self_feat), as_tensor(others)
    act = ps[f"{pre}/act"]
    n_act, h = act.shape
    batch = self_feat.shape[:-1]
    s = linear(self_feat, ps, f"{pre}/self")
    enc_s = relu(reshape(s, batch + (1, h)) + act)                          # (..., A, h)
    m = others.shape[-2]
    if m == 0:
        pooled = as_tensor(np.zeros(batch + (n_act, 2 * h), dtype=enc_s.dtype))
    else:
        enc_o = relu(linear(concat([others, as_tensor(other_actions, like=others)], axis=-1),
                            ps, f"{pre}/other"))                            # (..., M, h)
        q = linear(enc_s, ps, f"{pre}/q")                                   # (..., A, h)
        k = linear(enc_o, ps, f"{pre}/k")                                   # (..., M, h)
        logits = matmul(q, swapaxes(k, -1, -2)) * (1.0 / np.sqrt(h))        # (..., A, M)
        att = matmul(softmax(logits, axis=-1), relu(linear(enc_o, ps, f"{pre}/v")))
        gp = matmul(reshape(as_tensor(g), batch + (1, m)), enc_o)           # (..., 1, h)
        gp = gp * np.ones(batch + (n_act, 1), dtype=gp.dtype)
        pooled = concat([att, gp], axis=-1)
    q = mlp(concat([enc_s, pooled], axis=-1), ps, f"{pre}/out", 2)
    return reshape(q, batch + (n_act,))


def critic_eval(ps: ParamSet, role: int, self_feat, others, own_action, other_actions, g) -> Tensor:
    """Q(o, a, g) for the agent's taken action."""
    q_all = critic_all_actions(ps, role, self_feat, others, other_actions, g)
    a = np.asarray(own_action)
    onehot = np.eye(q_all.shape[-1], dtype=q_all.dtype)[a]
    return (q_all * onehot).sum(axis=-1)


def joint_critic_inputs(others_index: np.ndarray, actions: np.ndarray, n_actions: int) -> np.ndarray:
    """One-hot actions of every agent's other entities, (..., N, N-1, A)."""
    onehot = np.eye(n_actions, dtype=np.float32)[actions]
    return onehot[..., others_index, :]


def critic_for_agent(ps: ParamSet, role: int, joint_self, joint_others, joint_actions, g, agent: int,
                     n_agents: int, n_actions: int = 5) -> Tensor:
    """Scalar Q^i for one agent of a single joint observation."""
    from mra.envs.particle import others_index
    joint_actions = np.asarray(joint_actions)
    if joint_actions.shape[-1] != n_agents or joint_self.shape[-2] != n_agents:
        raise ContractError(f"population mismatch: {joint_actions.shape[-1]} actions, "
                            f"{joint_self.shape[-2]} observations, expected {n_agents}")
    oa = joint_critic_inputs(others_index(n_agents), joint_actions, n_actions)
    return critic_eval(ps, role, joint_self[..., agent:agent + 1, :], joint_others[..., agent:agent + 1, :, :],
                       joint_actions[..., agent:agent + 1], oa[..., agent:agent + 1, :, :],
                       np.asarray(g)[..., agent:agent + 1, :]).sum()


# -- targets -----------------------------------------------------------------
def soft_update(target: ParamSet, online: ParamSet, tau: float, names=None) -> None:
    """Polyak averaging in place: target <- (1 - tau) target + tau online."""
    if not 0.0 < tau <= 1.0:
        raise ContractError(f"tau must lie in (0, 1], got {tau}")
    for k in names if names is not None else target.names():
        t, o = target[k], online[k]
        if tau == 1.0:
            t.data = o.data.copy()
        else:
            t.data = ((1.0 - tau) * t.data + tau * o.data).astype(t.dtype)


def make_targets(online: ParamSet) -> ParamSet:
    names = target_names(online)
    return ParamSet({k: online[k].data for k in names}, dtype=online.dtype)
