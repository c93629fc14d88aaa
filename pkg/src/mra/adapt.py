"""Adaptation to a novel game, zero-shot evaluation and cross-play tables."""
from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from mra.agents import soft_update, theta_names
from mra.autodiff import Adam, ParamSet
from mra.envs import GameSet, GameSpec
from mra.envs.gameset import with_game_id
from mra.errors import ContractError
from mra.relnet import latent_probs, phi_names
from mra.rng import stream
from mra.rollout import Lockstep, run_episodes
from mra.train import Learner, TrainConfig, _metrics_row, checkpoint_meta, make_batch, save_state

MODES = ("zero_shot_expect", "zero_shot_enumerate", "adapted")


def latent_row(game_set: GameSet, spec: GameSpec) -> int:
    """psi row for ``spec``: its own if trained on, else the nearest total population (ties to the smaller)."""
    for m, g in enumerate(game_set):
        if tuple(g.populations) == tuple(spec.populations):
            return m
    n = spec.n_agents
    return min(range(len(game_set)), key=lambda m: (abs(game_set[m].n_agents - n), game_set[m].n_agents, m))


def check_compatible(game_set: GameSet, spec: GameSpec) -> None:
    if spec.env_kind != game_set.env_kind or spec.n_roles != game_set.n_roles:
        raise ContractError(f"checkpoint was trained on {game_set.env_kind} with {game_set.n_roles} roles, "
                            f"got {spec.env_kind} with {spec.n_roles}")


# -- adaptation --------------------------------------------------------------
@dataclass
class AdaptResult:
    params: ParamSet
    targets: ParamSet
    metrics: list
    trace: list


def adapt(params: ParamSet, targets: ParamSet, game_set: GameSet, spec: GameSpec, cfg: TrainConfig,
          episodes: int, freeze_theta: bool = False, out_dir=None) -> AdaptResult:
    """Critic steps plus joint (theta, phi) policy-gradient steps in ``spec``.

    One critic and one policy step per update, no Reptile. Latents come from
    the matching (or nearest) row of psi, once per episode; the policy loss
    regenerates graphs from them so gradients reach phi, while the critic
    sees detached graphs. ``freeze_theta`` updates phi only.
    """
    check_compatible(game_set, spec)
    row = latent_row(game_set, spec)
    ps, tg = params.copy(), targets.copy()
    cfg = replace(cfg, K=1)
    novel = GameSet((with_game_id(spec, 0),))
    learner = Learner(novel, cfg, params=ps, targets=tg)
    names = phi_names(ps) + ([] if freeze_theta else theta_names(ps))
    omega = Adam([ps[k] for k in sorted(names)], cfg.beta)
    metrics, t_update, done, chunk = [], 0, 0, 0
    while done < episodes:
        n = min(cfg.parallel, episodes - done)
        lat = _episode_latents(ps, spec, [row] * spec.n_roles, cfg.model.n_latent,
                               stream(cfg.seed, "adapt-latent", chunk), n)
        lock = Lockstep(spec, [stream(cfg.seed, "adapt-env", done + k) for k in range(n)], lat)
        act_rng = stream(cfg.seed, "adapt-act", chunk)
        while not lock.done:
            learner.buffer.push_many(0, lock.step(ps, cfg.model, act_rng))
            t_update += n
            if t_update % cfg.min_steps_per_update < n and learner.buffer.ready(0, cfg.batch_size):
                rng = stream(cfg.seed, "adapt-learn", learner.blocks)
                batch = make_batch(spec, learner.buffer.sample(0, cfg.batch_size, rng))
                learner.critic_step(batch, rng)
                learner.policy_step(batch, omega, rng, model=cfg.model)
                soft_update(tg, ps, cfg.tau)
                learner.trace.append("target")
                learner.blocks += 1
        rets, scores = lock.role_means(lock.returns), lock.role_means(lock.scores)
        metrics.extend(_metrics_row(done + k, spec.game_id, rets[k], scores[k], None, None, None) for k in range(n))
        done += n
        chunk += 1
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "metrics.jsonl", "w") as f:
            for row_ in metrics:
                f.write(json.dumps(row_) + "\n")
        meta = checkpoint_meta(cfg, game_set, episodes, learner.feat)
        meta["adapted_to"] = spec.to_dict()
        save_state(out / "checkpoint", ps, tg, meta)
    return AdaptResult(ps, tg, metrics, learner.trace)


def _episode_latents(ps: ParamSet, spec: GameSpec, rows, n_latent: int, rng, n: int) -> np.ndarray:
    """One latent per (episode, role), shared by the role's agents."""
    out = np.zeros((n, spec.n_agents), dtype=np.int64)
    for r in range(spec.n_roles):
        p = latent_probs(np.asarray(ps[f"latent/{r}/psi"].data[rows[r]], dtype=np.float64))
        out[:, spec.role_agents(r)] = rng.choice(n_latent, size=(n, 1), p=p)
    return out


# -- evaluation --------------------------------------------------------------
@dataclass
class EvalReport:
    game: dict
    mode: str
    runs: int
    role_returns: list
    role_scores: list
    latent_rows: list
    normalization: float | None = None
    per_latent: list = field(default_factory=list)   # (latents, returns, scores) per combination

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


def latent_combos(n_latent: int, n_roles: int):
    return list(itertools.product(range(n_latent), repeat=n_roles))


def evaluate_latents(ps: ParamSet, spec: GameSpec, model, runs: int, seed: int):
    """Mean role returns and scores for every per-role latent assignment.

    All combinations share the same environment and action streams.
    """
    out = []
    for combo in latent_combos(model.n_latent, spec.n_roles):
        lat = np.broadcast_to(np.asarray(combo)[spec.roles], (runs, spec.n_agents))
        r, s = run_episodes(ps, spec, model, [stream(seed, "eval-env", k) for k in range(runs)], lat,
                            stream(seed, "eval-act"))
        out.append((combo, r.mean(axis=0), s.mean(axis=0)))
    return out


def _expect_and_max(values: np.ndarray, weights: np.ndarray):
    """Weighted mean written as max - sum w (max - x), so it never exceeds the max."""
    top = values.max(axis=0)
    return top - (weights[:, None] * (top[None, :] - values)).sum(axis=0), top


def zero_shot_eval(ps: ParamSet, spec: GameSpec, model, rows, runs: int = 40, mode: str = "expect",
                   seed: int = 0) -> EvalReport:
    """Evaluate without updates.

    ``expect`` is the exact expectation over per-role latents drawn from psi
    (rows gives each role's row); ``enumerate`` reports each role's best
    latent assignment.
    """
    if runs < 1:
        raise ContractError("runs must be >= 1")
    if mode not in ("expect", "enumerate", "adapted"):
        raise ContractError(f"unknown evaluation mode {mode!r}")
    rows = list(rows)
    table = evaluate_latents(ps, spec, model, runs, seed)
    probs = [latent_probs(np.asarray(ps[f"latent/{r}/psi"].data[rows[r]], dtype=np.float64))
             for r in range(spec.n_roles)]
    w = np.array([np.prod([probs[r][c[r]] for r in range(spec.n_roles)]) for c, _, _ in table])
    rets = np.stack([t[1] for t in table])
    scores = np.stack([t[2] for t in table])
    e_ret, m_ret = _expect_and_max(rets, w)
    e_sc, m_sc = _expect_and_max(scores, w)
    pick = (m_ret, m_sc) if mode == "enumerate" else (e_ret, e_sc)
    name = {"expect": "zero_shot_expect", "enumerate": "zero_shot_enumerate", "adapted": "adapted"}[mode]
    return EvalReport(spec.to_dict(), name, runs, [float(x) for x in pick[0]], [float(x) for x in pick[1]],
                      rows, None, [[list(c), r.tolist(), s.tolist()] for c, r, s in table])


# -- cross-play --------------------------------------------------------------
def normalize_table(raw) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    top = raw.max()
    if top <= 0:
        if np.all(raw == top):
            return np.ones_like(raw)
        raise ContractError("normalization needs a positive maximum")
    return raw / top


def merge_roles(by_role: list[ParamSet]) -> ParamSet:
    """Take every role-indexed parameter of role r from ``by_role[r]``."""
    out = {}
    for r, ps in enumerate(by_role):
        for k in ps.names():
            if k.split("/")[1] == str(r):
                out[k] = ps[k].data
    return ParamSet(out)


@dataclass
class CrossPlay:
    labels: list          # row labels for ghosts, column labels for pac-men
    pacman_raw: list
    ghost_raw: list
    pacman: list
    ghost: list
    runs: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


def cross_play(pacman: dict, ghost: dict, spec: GameSpec, model, runs: int = 40, seed: int = 0,
               labels=("single", "mra")) -> CrossPlay:
    """All ghost x pac-man pairings; each entry is (params, psi row).

    Rows index the ghost checkpoint, columns the pac-man checkpoint; each role
    table is normalized by its own maximum cell.
    """
    if spec.env_kind != "pacman":
        raise ContractError("cross-play needs the pacman environment")
    pac_raw = np.zeros((len(labels), len(labels)))
    gho_raw = np.zeros_like(pac_raw)
    for i, gl in enumerate(labels):
        for j, pl in enumerate(labels):
            (pps, prow), (gps, grow) = pacman[pl], ghost[gl]
            merged = merge_roles([pps, gps])
            rep = zero_shot_eval(merged, spec, model, [prow, grow], runs, "expect", seed)
            pac_raw[i, j], gho_raw[i, j] = rep.role_scores
    return CrossPlay(list(labels), pac_raw.tolist(), gho_raw.tolist(), normalize_table(pac_raw).tolist(),
                     normalize_table(gho_raw).tolist(), runs)
