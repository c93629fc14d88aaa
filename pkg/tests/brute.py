"""Independent brute-force oracles used by the tests.

Nothing here calls into ``mra.oracle``; values come from enumerating
deterministic policies, sampling rollouts or direct payoff arithmetic.
"""
import itertools

import numpy as np


def joint_probs(pi):
    """(S, A_1..A_N) joint action probabilities via explicit products."""
    S = pi[0].shape[0]
    acts = [p.shape[1] for p in pi]
    out = np.zeros((S,) + tuple(acts))
    for s in range(S):
        for a in itertools.product(*[range(n) for n in acts]):
            out[(s,) + a] = np.prod([pi[i][s, a[i]] for i in range(len(pi))])
    return out


def value_by_solve(mg, pi, agent):
    w = joint_probs(pi)
    S = mg.n_states
    wf = w.reshape(S, -1)
    P = np.einsum("sa,sat->st", wf, mg.P.reshape(S, wf.shape[1], S))
    r = np.einsum("sa,sa->s", wf, mg.R[agent].reshape(S, -1))
    return np.linalg.solve(np.eye(S) - mg.gamma * P, r)


def optimal_value_exhaustive(mg, pi, agent):
    """Pointwise max of values over all deterministic deviations of ``agent``."""
    S, A = mg.n_states, mg.n_actions[agent]
    best = np.full(S, -np.inf)
    for choice in itertools.product(range(A), repeat=S):
        dev = np.zeros((S, A))
        dev[np.arange(S), choice] = 1.0
        pj = list(pi)
        pj[agent] = dev
        best = np.maximum(best, value_by_solve(mg, pj, agent))
    return best


def nashconv_exhaustive(mg, pi):
    return float(sum((optimal_value_exhaustive(mg, pi, i) - value_by_solve(mg, pi, i)).max()
                     for i in range(mg.n_agents)))


def mc_value(mg, pi, agent, s0, n, horizon, rng):
    """Discounted return mean and standard error from ``n`` rollouts, vectorized."""
    s = np.full(n, s0)
    ret = np.zeros(n)
    disc = 1.0
    flatP = mg.P.reshape(mg.n_states, -1, mg.n_states)
    flatR = mg.R[agent].reshape(mg.n_states, -1)
    acts = mg.n_actions
    for _ in range(horizon):
        a = [(rng.random((n, 1)) > np.cumsum(pi[i][s], axis=1)).sum(1) for i in range(len(pi))]
        idx = np.ravel_multi_index(a, acts)
        ret += disc * flatR[s, idx]
        c = np.cumsum(flatP[s, idx], axis=1)
        s = np.minimum((rng.random((n, 1)) > c).sum(1), mg.n_states - 1)
        disc *= mg.gamma
    return ret.mean(), ret.std(ddof=1) / np.sqrt(n)


def normal_form_nashconv(R0, R1, p, q):
    """Two-player one-shot game with row mix (p, 1-p) and column mix (q, 1-q)."""
    x, y = np.array([p, 1 - p]), np.array([q, 1 - q])
    u0, u1 = R0 @ y, x @ R1
    return (u0.max() - x @ u0) + (u1.max() - u1 @ y)
