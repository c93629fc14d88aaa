"""Exact equilibrium quantities on small tabular Markov games.

A joint policy is a list with one ``(S, A_i)`` array per agent. Transition
operators act on state distributions: ``M[s', s] = P(s' | s)`` under the joint
policy, so columns sum to one and the induced L1 operator norm of a
difference is its maximum absolute column sum.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from mra.envs.tabular import TabularMG
from mra.errors import ContractError, ParameterError, ResolutionError, ScopeError

MAX_STATES, MAX_AGENTS, MAX_ACTIONS = 6, 3, 3
VI_TOL = 1e-10


def check_scope(mg: TabularMG) -> None:
    if mg.n_states > MAX_STATES or mg.n_agents > MAX_AGENTS or max(mg.n_actions) > MAX_ACTIONS:
        raise ScopeError(f"oracle handles <= {MAX_STATES} states, <= {MAX_AGENTS} agents and "
                         f"<= {MAX_ACTIONS} actions; got {mg.n_states}, {mg.n_agents}, {mg.n_actions}")


def _check_gamma(mg: TabularMG) -> None:
    if not 0.0 <= mg.gamma < 1.0:
        raise ContractError(f"discount must lie in [0, 1), got {mg.gamma}")


def validate_policy(mg: TabularMG, pi) -> list[np.ndarray]:
    pi = [np.asarray(p, dtype=np.float64) for p in pi]
    if len(pi) != mg.n_agents:
        raise ContractError(f"{len(pi)} policies for {mg.n_agents} agents")
    for i, p in enumerate(pi):
        if p.shape != (mg.n_states, mg.n_actions[i]):
            raise ContractError(f"policy {i} has shape {p.shape}")
        if np.any(p < -1e-12) or not np.allclose(p.sum(-1), 1.0, atol=1e-9):
            raise ContractError(f"policy {i} rows are not distributions")
    return pi


def uniform_policy(mg: TabularMG) -> list[np.ndarray]:
    return [np.full((mg.n_states, a), 1.0 / a) for a in mg.n_actions]


def pure_policy(mg: TabularMG, actions) -> list[np.ndarray]:
    """Each agent plays ``actions[i]`` in every state (an int or per-state ints)."""
    out = []
    for i, a in enumerate(actions):
        p = np.zeros((mg.n_states, mg.n_actions[i]))
        p[np.arange(mg.n_states), np.broadcast_to(a, (mg.n_states,))] = 1.0
        out.append(p)
    return out


def random_policy(mg: TabularMG, rng: np.random.Generator) -> list[np.ndarray]:
    return [rng.dirichlet(np.ones(a), size=mg.n_states) for a in mg.n_actions]


def _joint_weights(mg: TabularMG, pi, skip: int | None = None) -> np.ndarray:
    """Probability of each joint action per state, shape (S, A_1..A_N)."""
    n = mg.n_agents
    w = np.ones((mg.n_states,) + (1,) * n)
    for i, p in enumerate(pi):
        if i == skip:
            continue
        shape = [mg.n_states] + [1] * n
        shape[1 + i] = mg.n_actions[i]
        w = w * p.reshape(shape)
    return w


def _action_axes(mg: TabularMG) -> tuple:
    return tuple(range(1, 1 + mg.n_agents))


def joint_transition(mg: TabularMG, pi) -> np.ndarray:
    """Row-stochastic state transition matrix P_pi[s, s']."""
    w = _joint_weights(mg, pi)
    return (w[..., None] * mg.P).sum(axis=_action_axes(mg))


def transition_operator(mg: TabularMG, pi) -> np.ndarray:
    """Column-stochastic operator acting on state distributions."""
    return joint_transition(mg, pi).T


def operator_norm(a: np.ndarray) -> float:
    """Induced L1 norm: maximum absolute column sum."""
    return float(np.abs(a).sum(axis=0).max()) if a.size else 0.0


def expected_reward(mg: TabularMG, pi, agent: int) -> np.ndarray:
    return (_joint_weights(mg, pi) * mg.R[agent]).sum(axis=_action_axes(mg))


def policy_value(mg: TabularMG, pi, agent: int) -> np.ndarray:
    """v = r_pi + gamma P_pi v, solved exactly."""
    _check_gamma(mg)
    pi = validate_policy(mg, pi)
    P = joint_transition(mg, pi)
    r = expected_reward(mg, pi, agent)
    return np.linalg.solve(np.eye(mg.n_states) - mg.gamma * P, r)


def state_visitation(mg: TabularMG, pi) -> np.ndarray:
    """Discounted occupancy; row s is the measure started from state s."""
    _check_gamma(mg)
    P = joint_transition(mg, validate_policy(mg, pi))
    return np.linalg.inv(np.eye(mg.n_states) - mg.gamma * P)


def induced_mdp(mg: TabularMG, pi, agent: int) -> tuple[np.ndarray, np.ndarray]:
    """Reward (S, A_i) and transitions (S, A_i, S) faced by ``agent``."""
    w = _joint_weights(mg, pi, skip=agent)
    others = tuple(ax for ax in _action_axes(mg) if ax != 1 + agent)
    R = (w * mg.R[agent]).sum(axis=others)
    P = (w[..., None] * mg.P).sum(axis=others)
    return R, P


def best_response(mg: TabularMG, pi, agent: int, tol: float = VI_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Greedy optimal policy against the others and its exact value vector."""
    _check_gamma(mg)
    pi = validate_policy(mg, pi)
    R, P = induced_mdp(mg, pi, agent)
    g = mg.gamma
    v = np.zeros(mg.n_states)
    stop = tol * (1.0 - g) / max(g, 1e-12)
    for _ in range(1_000_000):
        q = R + g * P @ v
        v_new = q.max(axis=1)
        done = np.abs(v_new - v).max() <= stop
        v = v_new
        if done:
            break
    q = R + g * P @ v
    star = np.zeros_like(R)
    star[np.arange(mg.n_states), q.argmax(axis=1)] = 1.0
    P_star = (star[..., None] * P).sum(axis=1)
    r_star = (star * R).sum(axis=1)
    v_star = np.linalg.solve(np.eye(mg.n_states) - g * P_star, r_star)
    return star, v_star


def replace_policy(pi, agent: int, p) -> list[np.ndarray]:
    out = list(pi)
    out[agent] = p
    return out


def nashconv(mg: TabularMG, pi) -> float:
    """Sum over agents of the largest per-state gain from a best response."""
    return float(sum(agent_gains(mg, pi)))


def agent_gains(mg: TabularMG, pi) -> list[float]:
    pi = validate_policy(mg, pi)
    out = []
    for i in range(mg.n_agents):
        _, v_star = best_response(mg, pi, i)
        out.append(float((v_star - policy_value(mg, pi, i)).max()))
    return out


def kappa(p, p_star) -> float:
    """Sup over states of the L1 distance between two action distributions."""
    p, p_star = np.atleast_2d(p), np.atleast_2d(p_star)
    if p.shape != p_star.shape:
        raise ContractError(f"policy shapes differ: {p.shape} vs {p_star.shape}")
    return float(np.abs(p_star - p).sum(axis=-1).max())


def lipschitz_ratio(mg: TabularMG, pi, agent: int, p_new) -> tuple[float, float]:
    """(operator-norm change, kappa) when ``agent`` switches to ``p_new``."""
    m0 = transition_operator(mg, pi)
    m1 = transition_operator(mg, replace_policy(pi, agent, p_new))
    return operator_norm(m1 - m0), kappa(pi[agent], p_new)


@dataclass
class LipschitzEstimate:
    value: float
    probes: int
    history: list = field(default_factory=list)   # running max after each probe


def lipschitz_estimate(mg: TabularMG, probes: int, rng: np.random.Generator, include=()) -> LipschitzEstimate:
    """Largest observed ||P^{pi*} - P^{pi}||_op / kappa over random probes.

    Each probe draws a random joint policy and agent and compares it with that
    agent's best response. Joint policies in ``include`` are probed first
    against every agent's best response.
    """
    check_scope(mg)
    best, history = 0.0, []

    def probe(pi, i):
        nonlocal best
        star, _ = best_response(mg, pi, i)
        num, k = lipschitz_ratio(mg, pi, i, star)
        if k > 1e-6:
            best = max(best, num / k)

    for pi in include:
        pi = validate_policy(mg, pi)
        for i in range(mg.n_agents):
            probe(pi, i)
    for _ in range(probes):
        pi = random_policy(mg, rng)
        probe(pi, int(rng.integers(mg.n_agents)))
        history.append(best)
    return LipschitzEstimate(best, probes, history)


@dataclass
class Lemma1Result:
    lhs: float
    rhs: float
    holds: bool
    kappas: list


def lemma1_bound(gamma: float, iota: float, kappas) -> float:
    return (gamma * iota / (1.0 - gamma) ** 2 + 1.0 / (1.0 - gamma)) * float(np.sum(kappas))


def lemma1_check(mg: TabularMG, pi, iota: float) -> Lemma1Result:
    """NashConv against (gamma iota / (1-gamma)^2 + 1/(1-gamma)) sum_i kappa_i."""
    check_scope(mg)
    if not mg.rewards_in_unit_interval():
        raise ContractError("the bound is stated for rewards in [0, 1]")
    pi = validate_policy(mg, pi)
    kappas = [kappa(pi[i], best_response(mg, pi, i)[0]) for i in range(mg.n_agents)]
    lhs = nashconv(mg, pi)
    rhs = lemma1_bound(mg.gamma, iota, kappas)
    return Lemma1Result(lhs, rhs, lhs <= rhs + 1e-6, kappas)


# -- NE sets on a policy grid ------------------------------------------------
def simplex_grid(n_actions: int, resolution: float) -> np.ndarray:
    steps = int(round(1.0 / resolution))
    if steps < 1 or abs(steps * resolution - 1.0) > 1e-9:
        raise ParameterError(f"resolution must divide 1, got {resolution}")
    pts = [c for c in itertools.product(range(steps + 1), repeat=n_actions - 1) if sum(c) <= steps]
    return np.array([list(c) + [steps - sum(c)] for c in pts], dtype=np.float64) / steps


def grid_policies(mg: TabularMG, resolution: float, max_joint: int = 200_000):
    """All joint policies whose per-state rows lie on the simplex grid."""
    per_agent = []
    for a in mg.n_actions:
        pts = simplex_grid(a, resolution)
        per_agent.append([np.array(c) for c in itertools.product(pts, repeat=mg.n_states)])
    total = int(np.prod([len(p) for p in per_agent], dtype=np.float64))
    if total > max_joint:
        raise ScopeError(f"{total} grid policies exceed the enumeration cap {max_joint}")
    return [list(c) for c in itertools.product(*per_agent)]


def approximate_ne_set(mg: TabularMG, resolution: float = 0.05, tol: float = 1e-3) -> list:
    check_scope(mg)
    found = [pi for pi in grid_policies(mg, resolution) if nashconv(mg, pi) <= tol]
    if not found:
        raise ResolutionError(f"no grid policy within {tol} of equilibrium at resolution {resolution}")
    return found


@dataclass
class SigmaReport:
    value: float
    tol: float
    resolution: float
    worst: tuple            # (eval game index, agent) attaining the max
    ne_counts: dict


def sigma_distance(train_set, eval_set, resolution: float = 0.05, tol: float = 1e-3) -> SigmaReport:
    """Max over (m', i) of the min NashConv in m' when agent i adopts a
    same-role agent's equilibrium policy from some training game."""
    train_ne = [approximate_ne_set(m, resolution, tol) for m in train_set]
    eval_ne = [approximate_ne_set(m, resolution, tol) for m in eval_set]
    worst_val, worst = -np.inf, None
    for e, (mp, ne_p) in enumerate(zip(eval_set, eval_ne)):
        for i in range(mp.n_agents):
            shape = (mp.n_states, mp.n_actions[i])
            cands = []
            for m, ne in zip(train_set, train_ne):
                for ip in range(m.n_agents):
                    if m.roles[ip] == mp.roles[i] and (m.n_states, m.n_actions[ip]) == shape:
                        cands.extend(pi[ip] for pi in ne)
            if not cands:
                raise ContractError(f"no compatible training agent for agent {i} of eval game {e}")
            uniq = list({c.tobytes(): c for c in cands}.values())
            best = min(nashconv(mp, replace_policy(pp, i, c)) for c in uniq for pp in ne_p)
            if best > worst_val:
                worst_val, worst = best, (e, i)
    return SigmaReport(float(worst_val), tol, resolution, worst,
                       {"train": [len(n) for n in train_ne], "eval": [len(n) for n in eval_ne]})


# -- epsilon range -----------------------------------------------------------
def epsilon_threshold(sigma: float, iota_train, iota_eval, gamma: float) -> float:
    """sigma - min over (iota_m, iota_m') of sigma gamma (iota_m' - iota_m) / (gamma iota_m' + 1 - gamma)."""
    it = np.atleast_1d(np.asarray(iota_train, dtype=np.float64))
    ie = np.atleast_1d(np.asarray(iota_eval, dtype=np.float64))
    terms = sigma * gamma * (ie[None, :] - it[:, None]) / (gamma * ie[None, :] + 1.0 - gamma)
    return float(sigma - terms.min())


def epsilon_range_member(mg: TabularMG, pi, eps: float) -> bool:
    if eps < 0:
        raise ParameterError(f"epsilon must be >= 0, got {eps}")
    return nashconv(mg, pi) <= eps
