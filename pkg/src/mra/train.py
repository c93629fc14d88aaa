"""Meta-representation training over a set of games.

Each time a game's rollouts cross the update interval, one block runs on a
batch from that game's replay partition:

    K x (critic step, policy step) -> Reptile -> phi step -> (psi, xi) step -> targets

theta (policy and V) takes its K inner steps with a fresh Adam and is then
moved by the Reptile rule. The critic (zeta), phi, psi and the auxiliary
inference net (xi) keep persistent optimizers.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from mra.agents import (
    critic_all_actions, critic_eval, init_model, joint_critic_inputs, make_targets, policy_logits,
    sample_categorical, soft_update, theta_names, zeta_names,
)
from mra.autodiff import Adam, ParamSet, concat, detach, exp, grad, log, log_softmax, matmul, relu, take_along
from mra.autodiff.checkpoint import load_checkpoint, save_checkpoint
from mra.autodiff.nn import add_linear, add_mlp, linear, mlp
from mra.autodiff.tensor import as_tensor, reshape
from mra.buffer import ReplayBuffer
from mra.envs import GameSet, GameSpec
from mra.envs.particle import entity_width, others_index
from mra.errors import ContractError, NonFiniteError, ParameterError
from mra.relnet import ModelConfig, all_option_graphs, generate_graph, latent_probs, phi_names, sample_latent
from mra.rng import stream
from mra.rollout import Lockstep, joint_obs


@dataclass
class TrainConfig:
    alpha: float = 1.0              # Reptile outer step
    beta: float = 3e-4              # inner learning rate, also used by the other optimizers
    critic_lr: float | None = None  # defaults to beta
    K: int = 10
    gamma: float = 0.95
    batch_size: int = 1024
    parallel: int = 12
    min_steps_per_update: int = 100
    n_marginal: int = 10
    total_episodes: int = 2000
    seed: int = 0
    tau: float = 0.01
    buffer_capacity: int = 100_000
    model: ModelConfig = field(default_factory=ModelConfig)
    uniform_latent: bool = False    # ablation: z ~ uniform, psi untouched
    entropy_coef: float = 0.0
    warmup_blocks: int = 0          # leading update blocks that train only the critic
    baseline: bool = True           # counterfactual baseline in the policy gradient
    pg_estimator: str = "sample"    # or "all_actions": exact expectation over the agent's own action
    mi_enumerate: bool = False      # exact marginal over z' instead of n samples
    checkpoint_every: int = 0       # episodes; 0 keeps only the final checkpoint
    timing: bool = False            # wall_ms in metrics (breaks byte-identical reruns)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if self.K < 1:
            raise ParameterError(f"K must be >= 1, got {self.K}")
        if not 0.0 < self.alpha <= 1.0:
            raise ParameterError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma < 1.0:
            raise ParameterError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.batch_size < 1 or self.parallel < 1 or self.min_steps_per_update < 1:
            raise ParameterError("batch_size, parallel and min_steps_per_update must be >= 1")
        if self.pg_estimator not in ("sample", "all_actions"):
            raise ParameterError(f"unknown pg_estimator {self.pg_estimator!r}")
        if self.n_marginal < 1:
            raise ParameterError("n_marginal must be >= 1")
        if not 0.0 < self.tau <= 1.0:
            raise ParameterError(f"tau must lie in (0, 1], got {self.tau}")

    def to_dict(self) -> dict:
        return asdict(self)


# -- batches -----------------------------------------------------------------
@dataclass
class Batch:
    spec: GameSpec
    self_feat: np.ndarray      # (B, N, F)
    others: np.ndarray         # (B, N, N-1, F)
    next_self: np.ndarray
    next_others: np.ndarray
    actions: np.ndarray        # (B, N)
    rewards: np.ndarray        # (B, N)
    graphs: np.ndarray         # (B, N, N-1)
    latents: np.ndarray        # (B, N)

    @property
    def size(self) -> int:
        return len(self.actions)


def make_batch(spec: GameSpec, raw: dict) -> Batch:
    s, o = joint_obs(spec, raw["pos"], raw["vel"], raw["landmarks"])
    ns, no = joint_obs(spec, raw["next_pos"], raw["next_vel"], raw["next_landmarks"])
    return Batch(spec, s, o, ns, no, raw["actions"], raw["rewards"].astype(np.float32),
                 raw["graphs"].astype(np.float32), raw["latents"])


def sample_joint_actions(ps: ParamSet, spec: GameSpec, self_feat, others, graphs, rng) -> np.ndarray:
    actions = np.zeros(self_feat.shape[:-1], dtype=np.int64)
    for r in range(spec.n_roles):
        idx = spec.role_agents(r)
        logp = log_softmax(policy_logits(ps, r, self_feat[:, idx], others[:, idx], graphs[:, idx])).data
        actions[:, idx] = sample_categorical(np.exp(logp), rng)
    return actions


def _n_actions(ps: ParamSet) -> int:
    return ps["critic/0/act"].shape[0]


# -- losses ------------------------------------------------------------------
def critic_loss(ps: ParamSet, targets: ParamSet, batch: Batch, gamma: float, rng: np.random.Generator):
    """Mean squared Bellman error, summed over roles.

    y = r + gamma Q_target(o', a', g) with a' drawn from the target policy and
    g the graph stored with the transition.
    """
    spec, n = batch.spec, batch.spec.n_agents
    n_act = _n_actions(ps)
    oidx = others_index(n)
    a_next = sample_joint_actions(targets, spec, batch.next_self, batch.next_others, batch.graphs, rng)
    oa_next = joint_critic_inputs(oidx, a_next, n_act)
    oa = joint_critic_inputs(oidx, batch.actions, n_act)
    total = 0.0
    for r in range(spec.n_roles):
        idx = spec.role_agents(r)
        g = batch.graphs[:, idx]
        q_next = critic_all_actions(targets, r, batch.next_self[:, idx], batch.next_others[:, idx],
                                    oa_next[:, idx], g).data
        y = batch.rewards[:, idx] + gamma * np.take_along_axis(q_next, a_next[:, idx, None], -1)[..., 0]
        q = critic_eval(ps, r, batch.self_feat[:, idx], batch.others[:, idx], batch.actions[:, idx],
                        oa[:, idx], g)
        total = total + ((q - y.astype(q.dtype)) ** 2).mean()
    return as_tensor(total)


def policy_loss(ps: ParamSet, batch: Batch, rng: np.random.Generator, baseline: bool = True,
                entropy_coef: float = 0.0, model: ModelConfig | None = None, estimator: str = "sample"):
    """Negated score-function objective, summed over roles.

    Actions are resampled from the current policy at the stored (o, g). With
    ``model`` given, graphs are regenerated from the stored latents so the
    loss also reaches phi; the critic always sees them detached.
    """
    spec, n = batch.spec, batch.spec.n_agents
    graphs = [None] * spec.n_roles
    g_all = batch.graphs
    if model is not None:
        z = np.eye(model.n_latent, dtype=np.float32)[batch.latents]
        g_all = np.zeros_like(batch.graphs)
        for r in range(spec.n_roles):
            idx = spec.role_agents(r)
            graphs[r] = generate_graph(batch.self_feat[:, idx], batch.others[:, idx], z[:, idx], ps, r, model)
            g_all[:, idx] = graphs[r].data
    actions = sample_joint_actions(ps, spec, batch.self_feat, batch.others, g_all, rng)
    oa = joint_critic_inputs(others_index(n), actions, _n_actions(ps))
    total = 0.0
    for r in range(spec.n_roles):
        idx = spec.role_agents(r)
        g = graphs[r] if graphs[r] is not None else g_all[:, idx]
        logp = log_softmax(policy_logits(ps, r, batch.self_feat[:, idx], batch.others[:, idx], g))
        q = critic_all_actions(ps, r, batch.self_feat[:, idx], batch.others[:, idx], oa[:, idx],
                               g_all[:, idx]).data
        if estimator == "all_actions":
            loss = pg_all_actions(logp, q, baseline)
        else:
            loss = pg_surrogate(logp, actions[:, idx], q, baseline)
        if entropy_coef:
            loss = loss + entropy_coef * (exp(logp) * logp).sum(axis=-1).mean()
        total = total + loss
    return as_tensor(total)


def pg_surrogate(logp, actions: np.ndarray, q: np.ndarray, baseline: bool = True):
    """-mean(log pi(a) * adv) with adv = Q(a) - sum_a' pi(a') Q(a') when ``baseline``."""
    qa = np.take_along_axis(q, actions[..., None], -1)[..., 0]
    adv = qa - (np.exp(logp.data) * q).sum(-1) if baseline else qa
    lp = take_along(logp, actions[..., None], -1)
    return -(reshape(lp, lp.shape[:-1]) * adv.astype(lp.dtype)).mean()


def pg_all_actions(logp, q: np.ndarray, baseline: bool = True):
    """-mean(sum_a pi(a) adv(a) log pi(a)) with pi held fixed; same expected gradient as sampling a."""
    pi = np.exp(logp.data)
    adv = q - (pi * q).sum(-1, keepdims=True) if baseline else q
    return -(logp * (pi * adv).astype(logp.dtype)).sum(axis=-1).mean()


def mi_bound_terms(log_pi_heads, z: np.ndarray, weights: np.ndarray, pi_online=None):
    """Per-sample lower bound on I(g; a | o) for discrete latent heads.

    log_pi_heads (..., Z, A): target-policy log-probabilities under each
    latent's graph; z (..., Z) one-hot of the sampled latent; weights (..., Z)
    nonnegative mixture weights of the marginal p(a | o) (sample counts or
    probabilities). The expectation over a uses ``pi_online`` (..., A) when
    given, else the numerator policy.
    """
    lh = as_tensor(log_pi_heads)
    w = np.asarray(weights, dtype=lh.dtype)
    lnum = (lh * z[..., None].astype(lh.dtype)).sum(axis=-2)                     # (..., A)
    live = w[..., None] > 0
    m = np.where(live, lh.data, -np.inf).max(axis=-2)                          # (..., A)
    shift = np.where(live, m[..., None, :], lh.data)       # zero-weight heads contribute exp(0) * 0
    mix = (exp(lh - shift) * w[..., None]).sum(axis=-2)
    ratio = (lnum - m) - log(mix / w.sum(-1, keepdims=True))
    pi = exp(lnum) if pi_online is None else pi_online
    return (pi * ratio).sum(axis=-1)


def latent_weights(psi_row: np.ndarray, shape: tuple, n: int, rng, enumerate_: bool) -> np.ndarray:
    """Mixture weights over z' for the marginal: counts of n draws, or the probabilities."""
    p = latent_probs(np.asarray(psi_row, dtype=np.float64))
    if enumerate_:
        return np.broadcast_to(p, shape + p.shape).astype(np.float64)
    return rng.multinomial(n, p, size=shape).astype(np.float64)


def mi_action_bound(ps: ParamSet, targets: ParamSet, batch: Batch, game_row: int, model: ModelConfig,
                    rng: np.random.Generator, n_marginal: int = 10, enumerate_: bool = False,
                    uniform: bool = False):
    """Lower bound on I(g; a | o) averaged over the batch and roles.

    Gradients reach phi through every head's graph; psi only supplies the
    latent draws.
    """
    spec = batch.spec
    total = 0.0
    for r in range(spec.n_roles):
        idx = spec.role_agents(r)
        s, o = batch.self_feat[:, idx], batch.others[:, idx]
        psi = ps[f"latent/{r}/psi"]
        row = np.zeros(model.n_latent) if uniform else psi.data[game_row]
        shape = s.shape[:-1]
        z = sample_latent(psi, game_row, rng, uniform=uniform, size=shape)
        heads = all_option_graphs(s, o, ps, r, model)                             # (B, Nr, Z, M)
        zz = model.n_latent
        s_rep = s[..., None, :] * np.ones((zz, 1), dtype=s.dtype)
        o_rep = o[..., None, :, :] * np.ones((zz, 1, 1), dtype=o.dtype)
        lh = log_softmax(policy_logits(targets, r, s_rep, o_rep, heads))          # (B, Nr, Z, A)
        g = reshape(matmul(reshape(as_tensor(z), shape + (1, zz)), heads), heads.shape[:-2] + (heads.shape[-1],))
        pi = exp(log_softmax(policy_logits(ps, r, s, o, g)))
        w = latent_weights(row, shape, n_marginal, rng, enumerate_)
        total = total + mi_bound_terms(lh, z, w, pi).mean()
    return as_tensor(total) * (1.0 / spec.n_roles)


# -- auxiliary inference network ---------------------------------------------
def init_aux(ps: ParamSet, role: int, feat: int, n_games: int, hidden: int, rng: np.random.Generator) -> None:
    add_linear(ps, f"aux/{role}/self", feat, hidden, rng)
    add_linear(ps, f"aux/{role}/other", feat, hidden, rng)
    add_mlp(ps, f"aux/{role}/out", [2 * hidden, hidden, n_games], rng, out_scale=0.0)


def xi_names(ps: ParamSet) -> list[str]:
    return [k for k in ps.names() if k.startswith("aux/")]


def aux_logits(ps: ParamSet, role: int, self_feat, others, g):
    s = relu(linear(self_feat, ps, f"aux/{role}/self"))
    m = others.shape[-2]
    if m == 0:
        pooled = as_tensor(np.zeros(s.shape, dtype=s.dtype))
    else:
        o = relu(linear(others, ps, f"aux/{role}/other"))
        g = as_tensor(g)
        pooled = matmul(reshape(g, g.shape[:-1] + (1, m)), o)
        pooled = reshape(pooled, pooled.shape[:-2] + (pooled.shape[-1],))
    return mlp(concat([s, pooled], axis=-1), ps, f"aux/{role}/out", 2)


def cross_entropy(logits, labels: np.ndarray):
    lp = log_softmax(logits)
    picked = take_along(lp, np.asarray(labels)[..., None], -1)
    return -picked.mean()


def aux_inference_loss(ps: ParamSet, role: int, self_feat, others, g, game_ids):
    """Cross-entropy of predicting the game index from (o, g)."""
    return cross_entropy(aux_logits(ps, role, self_feat, others, g), game_ids)


def implied_mi(aux_loss: float, n_games: int) -> float:
    """log|M| - loss, clipped to its valid range [0, log|M|]."""
    top = float(np.log(n_games))
    return float(min(max(top - aux_loss, 0.0), top))


def mixed_aux_loss(ps: ParamSet, batches: dict, model: ModelConfig, rng: np.random.Generator,
                   uniform: bool = False, temperature: float = 1.0):
    """Aux loss over batches from several games; z is a relaxed sample from psi."""
    terms = []
    for m, b in batches.items():
        for r in range(b.spec.n_roles):
            idx = b.spec.role_agents(r)
            s, o = b.self_feat[:, idx], b.others[:, idx]
            z = sample_latent(ps[f"latent/{r}/psi"], m, rng, differentiable=True, uniform=uniform,
                              temperature=temperature, size=s.shape[:-1])
            g = generate_graph(s, o, z, ps, r, model)
            terms.append(aux_inference_loss(ps, r, s, o, g, np.full(s.shape[:-1], m)))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


# -- Reptile -----------------------------------------------------------------
def reptile_outer_update(theta_init, theta_k, alpha: float):
    """theta_init + alpha (theta_K - theta_init), elementwise over a list or dict."""
    if isinstance(theta_init, dict):
        return {k: reptile_outer_update(theta_init[k], theta_k[k], alpha) for k in theta_init}
    if isinstance(theta_init, (list, tuple)):
        return [reptile_outer_update(a, b, alpha) for a, b in zip(theta_init, theta_k)]
    a, b = np.asarray(theta_init), np.asarray(theta_k)
    if alpha == 1.0:
        return b.copy()
    return (a + alpha * (b - a)).astype(a.dtype)


# -- learner -----------------------------------------------------------------
@dataclass
class TrainResult:
    params: ParamSet
    targets: ParamSet
    metrics: list
    trace: list
    config: TrainConfig
    game_set: GameSet


class Learner:
    """Owns parameters, optimizers and the replay buffer; runs update blocks."""

    def __init__(self, game_set: GameSet, cfg: TrainConfig, params: ParamSet | None = None,
                 targets: ParamSet | None = None, dump_dir=None):
        self.game_set, self.cfg = game_set, cfg
        self.model = cfg.model
        self.feat = entity_width(game_set[0])
        n_games = len(game_set)
        if params is None:
            rng = stream(cfg.seed, "init")
            params = init_model(self.feat, game_set.n_roles, n_games, self.model, rng)
            for r in range(game_set.n_roles):
                init_aux(params, r, self.feat, n_games, self.model.hidden, rng)
        self.ps = params
        self.targets = targets if targets is not None else make_targets(params)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, game_ids=range(n_games))
        psi = [k for k in params.names() if k.startswith("latent/")]
        self.critic_opt = Adam([params[k] for k in zeta_names(params)], cfg.critic_lr or cfg.beta)
        self.phi_opt = Adam([params[k] for k in phi_names(params)], cfg.beta)
        aux_keys = xi_names(params) + ([] if cfg.uniform_latent else psi)
        self.aux_opt = Adam([params[k] for k in aux_keys], cfg.beta)
        self.trace: list[str] = []
        self.blocks = 0
        self.last_mi = {}
        self.last_aux = None
        self.dump_dir = dump_dir

    # -- guards --------------------------------------------------------------
    def _finite(self, what: str, value, grads=()):
        ok = np.isfinite(value) and all(np.all(np.isfinite(g)) for g in grads)
        if ok:
            return
        info = {"loss": what, "value": repr(float(value)), "block": self.blocks,
                "trace_tail": self.trace[-8:]}
        if self.dump_dir is not None:
            d = Path(self.dump_dir) / "abort"
            save_checkpoint(d, self.ps.arrays(), meta=info)
            (d / "diagnostic.json").write_text(json.dumps(info, indent=2) + "\n")
        raise NonFiniteError(f"non-finite {what} at block {self.blocks}: {info['value']}")

    # -- steps ---------------------------------------------------------------
    def critic_step(self, batch: Batch, rng) -> float:
        params = self.critic_opt.params
        loss, grads = grad(lambda: critic_loss(self.ps, self.targets, batch, self.cfg.gamma, rng), params)
        self._finite("critic loss", loss.item(), grads)
        self.critic_opt.step(grads)
        self.trace.append("critic")
        return loss.item()

    def policy_step(self, batch: Batch, opt: Adam, rng, model: ModelConfig | None = None) -> float:
        cfg = self.cfg
        loss, grads = grad(lambda: policy_loss(self.ps, batch, rng, cfg.baseline, cfg.entropy_coef, model,
                                               cfg.pg_estimator),
                           opt.params)
        self._finite("policy loss", loss.item(), grads)
        opt.step(grads)
        self.trace.append("policy")
        return loss.item()

    def phi_step(self, batch: Batch, row: int, rng) -> float:
        cfg = self.cfg
        val, grads = grad(lambda: mi_action_bound(self.ps, self.targets, batch, row, self.model, rng,
                                                  cfg.n_marginal, cfg.mi_enumerate, cfg.uniform_latent),
                          self.phi_opt.params)
        self._finite("MI bound", val.item(), grads)
        self.phi_opt.step(grads, ascend=True)
        self.trace.append("phi")
        return val.item()

    def aux_step(self, rng) -> float | None:
        n_games = len(self.game_set)
        if n_games == 1:
            return None
        per = max(1, self.cfg.batch_size // n_games)
        batches = {}
        for m, spec in enumerate(self.game_set):
            part = self.buffer.partition(m)
            if len(part):
                batches[m] = make_batch(spec, part.sample(min(per, len(part)), rng))
        if not batches:
            return None
        loss, grads = grad(lambda: mixed_aux_loss(self.ps, batches, self.model, rng, self.cfg.uniform_latent),
                           self.aux_opt.params)
        self._finite("aux loss", loss.item(), grads)
        self.aux_opt.step(grads)
        self.trace.append("aux")
        return loss.item()

    def theta_params(self):
        return [self.ps[k] for k in theta_names(self.ps)]

    def update_block(self, game_id: int, rng) -> dict:
        cfg = self.cfg
        spec = self.game_set[game_id]
        batch = make_batch(spec, self.buffer.sample(game_id, cfg.batch_size, rng))
        theta = self.theta_params()
        theta0 = [t.data.copy() for t in theta]
        opt = Adam(theta, cfg.beta)
        warm = self.blocks < cfg.warmup_blocks
        for _ in range(cfg.K):
            self.critic_step(batch, rng)
            if not warm:
                self.policy_step(batch, opt, rng)
        for t, a in zip(theta, reptile_outer_update(theta0, [t.data for t in theta], cfg.alpha)):
            t.data = a
        self.trace.append("reptile")
        mi = self.phi_step(batch, game_id, rng)
        aux = self.aux_step(rng)
        soft_update(self.targets, self.ps, cfg.tau)
        self.trace.append("target")
        self.blocks += 1
        self.last_mi[game_id] = mi
        if aux is not None:
            self.last_aux = aux
        return {"mi_bound": mi, "aux_loss": aux}


# -- orchestration -----------------------------------------------------------
def episode_budgets(total: int, n_games: int) -> list[int]:
    base, extra = divmod(total, n_games)
    return [base + (m < extra) for m in range(n_games)]


def draw_latents(ps: ParamSet, spec: GameSpec, row: int, model: ModelConfig, rng, n_envs: int,
                 uniform: bool = False) -> np.ndarray:
    """Integer latent per (episode, agent), drawn from the agent's role row of psi."""
    out = np.zeros((n_envs, spec.n_agents), dtype=np.int64)
    for r in range(spec.n_roles):
        idx = spec.role_agents(r)
        p = np.full(model.n_latent, 1.0 / model.n_latent) if uniform else \
            latent_probs(np.asarray(ps[f"latent/{r}/psi"].data[row], dtype=np.float64))
        out[:, idx] = rng.choice(model.n_latent, size=(n_envs, len(idx)), p=p)
    return out


def checkpoint_meta(cfg: TrainConfig, game_set: GameSet, episode: int, feat: int) -> dict:
    return {"config": cfg.to_dict(), "game_set": game_set.to_dict(), "episode": episode, "feat": feat}


def save_state(path, ps: ParamSet, targets: ParamSet, meta: dict):
    tensors = ps.arrays()
    tensors.update({f"target/{k}": v for k, v in targets.arrays().items()})
    return save_checkpoint(path, tensors, meta)


def load_state(path) -> tuple[ParamSet, ParamSet, dict]:
    tensors, meta = load_checkpoint(path)
    ps = ParamSet({k: v for k, v in tensors.items() if not k.startswith("target/")})
    targets = ParamSet({k[len("target/"):]: v for k, v in tensors.items() if k.startswith("target/")})
    return ps, targets, meta


def _metrics_row(episode, game_id, role_returns, role_scores, mi, aux, wall_ms):
    return {"episode": episode, "game_id": game_id, "role_returns": [float(x) for x in role_returns],
            "mi_bound": mi, "aux_loss": aux, "wall_ms": wall_ms,
            "role_scores": [float(x) for x in role_scores]}


def train(game_set: GameSet, cfg: TrainConfig, out_dir=None, params: ParamSet | None = None) -> TrainResult:
    """Round-robin over games, each with an equal share of the episode budget."""
    if len(game_set) < 1:
        raise ContractError("need at least one training game")
    kinds = {g.env_kind for g in game_set}
    if len(kinds) != 1:
        raise ContractError(f"games must share one environment, got {sorted(kinds)}")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.jsonl").write_text("")
    learner = Learner(game_set, cfg, params, dump_dir=out)
    budgets = episode_budgets(cfg.total_episodes, len(game_set))
    done = [0] * len(game_set)
    metrics, episode, chunk, t_update = [], 0, 0, 0
    next_ckpt = cfg.checkpoint_every or None
    while any(d < b for d, b in zip(done, budgets)):
        for m, spec in enumerate(game_set):
            n = min(cfg.parallel, budgets[m] - done[m])
            if n <= 0:
                continue
            t0 = time.perf_counter()
            env_rngs = [stream(cfg.seed, "env", episode + k) for k in range(n)]
            lat = draw_latents(learner.ps, spec, m, cfg.model, stream(cfg.seed, "latent", chunk), n,
                               cfg.uniform_latent)
            lock = Lockstep(spec, env_rngs, lat)
            act_rng = stream(cfg.seed, "act", chunk)
            while not lock.done:
                learner.buffer.push_many(m, lock.step(learner.ps, cfg.model, act_rng))
                t_update += n
                if t_update % cfg.min_steps_per_update < n and learner.buffer.ready(m, cfg.batch_size):
                    learner.update_block(m, stream(cfg.seed, "learn", learner.blocks))
            rets, scores = lock.role_means(lock.returns), lock.role_means(lock.scores)
            wall = (time.perf_counter() - t0) * 1000.0 / n if cfg.timing else None
            rows = [_metrics_row(episode + k, m, rets[k], scores[k], learner.last_mi.get(m), learner.last_aux, wall)
                    for k in range(n)]
            metrics.extend(rows)
            if out is not None:
                with open(out / "metrics.jsonl", "a") as f:
                    for row in rows:
                        f.write(json.dumps(row) + "\n")
            episode += n
            done[m] += n
            chunk += 1
            if out is not None and next_ckpt is not None and episode >= next_ckpt:
                save_state(out / f"ckpt_{episode:06d}", learner.ps, learner.targets,
                           checkpoint_meta(cfg, game_set, episode, learner.feat))
                next_ckpt += cfg.checkpoint_every
    if out is not None:
        save_state(out / "checkpoint", learner.ps, learner.targets,
                   checkpoint_meta(cfg, game_set, episode, learner.feat))
    return TrainResult(learner.ps, learner.targets, metrics, learner.trace, cfg, game_set)


def config_from_meta(meta: dict) -> tuple[TrainConfig, GameSet]:
    return TrainConfig(**meta["config"]), GameSet.from_dict(meta["game_set"])


def with_overrides(cfg: TrainConfig, **kw) -> TrainConfig:
    return replace(cfg, **kw)
