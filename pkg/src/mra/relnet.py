"""Relational graphs over other entities and the latent code that selects them.

For agent i with self entity o_s and other entities o_j the graph weights are

    g^{i,j} = softmax_j(Q(o_s)^T K(o_j)),     e^i = sum_j g^{i,j} V(o_j).

phi owns the query/key transforms; V belongs to the policy (theta) and is
shared by all heads of a role. A categorical latent z, drawn per game from
p(z | m; psi), picks the graph:

* ``option``: one (Q, K) head per latent class, z selects (soft z blends) heads;
* ``concat``: z is appended to every entity before a single attention head;
* ``bilinear``: each entity is replaced by its outer product with z.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mra.autodiff import Tensor, as_tensor, concat, gumbel_softmax, matmul, softmax
from mra.autodiff.nn import ParamSet, add_linear, linear
from mra.autodiff.tensor import reshape, swapaxes
from mra.errors import ContractError

VARIANTS = ("option", "concat", "bilinear")


@dataclass(frozen=True)
class ModelConfig:
    n_latent: int = 6
    width: int = 64          # embedding width d
    hidden: int = 64
    variant: str = "option"
    n_actions: int = 5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown relnet variant {self.variant!r}")
        if self.n_latent < 1 or self.width < 1 or self.hidden < 1:
            raise ContractError("model sizes must be positive")

    @property
    def n_heads(self) -> int:
        return self.n_latent if self.variant == "option" else 1


def _attn_input_width(feat: int, cfg: ModelConfig) -> int:
    return {"option": feat, "concat": feat + cfg.n_latent, "bilinear": feat * cfg.n_latent}[cfg.variant]


def init_relnet(ps: ParamSet, role: int, feat: int, cfg: ModelConfig, rng: np.random.Generator) -> None:
    width = _attn_input_width(feat, cfg)
    for h in range(cfg.n_heads):
        add_linear(ps, f"relnet/{role}/{h}/q", width, cfg.width, rng)
        add_linear(ps, f"relnet/{role}/{h}/k", width, cfg.width, rng)
    add_linear(ps, f"relnet/{role}/v", feat, cfg.width, rng)


def phi_names(ps: ParamSet, role: int | None = None) -> list[str]:
    pre = "relnet/" if role is None else f"relnet/{role}/"
    return [k for k in ps.names() if k.startswith(pre) and "/v/" not in k]


def _stacked(ps: ParamSet, role: int, kind: str, n_heads: int) -> tuple[Tensor, Tensor]:
    """All heads' weights side by side: (F, H*d) and (H*d,)."""
    ws = [ps[f"relnet/{role}/{h}/{kind}/w"] for h in range(n_heads)]
    bs = [ps[f"relnet/{role}/{h}/{kind}/b"] for h in range(n_heads)]
    if n_heads == 1:
        return ws[0], bs[0]
    return concat(ws, axis=-1), concat(bs, axis=-1)


def head_graphs(self_in, others_in, ps: ParamSet, role: int, n_heads: int) -> Tensor:
    """Per-head attention weights (..., H, M) from already-prepared entity inputs.

    self_in: (..., F'), others_in: (..., M, F'), M >= 1.
    """
    wq, bq = _stacked(ps, role, "q", n_heads)
    wk, bk = _stacked(ps, role, "k", n_heads)
    self_in, others_in = as_tensor(self_in), as_tensor(others_in)
    batch = self_in.shape[:-1]
    m = others_in.shape[-2]
    d = wq.shape[-1] // n_heads
    q = reshape(matmul(reshape(self_in, (-1, 1, self_in.shape[-1])), wq) + bq, batch + (n_heads, d, 1))
    k = matmul(others_in, wk) + bk                                           # (..., M, H*d)
    k = swapaxes(reshape(k, batch + (m, n_heads, d)), -3, -2)                # (..., H, M, d)
    logits = reshape(matmul(k, q), batch + (n_heads, m))
    return softmax(logits, axis=-1)


def _latent_inputs(self_feat, others, z, cfg: ModelConfig):
    if cfg.variant == "option":
        return self_feat, others
    z = as_tensor(z) * np.ones(self_feat.shape[:-1] + (1,), dtype=self_feat.dtype)
    m = others.shape[-2]
    zb = z.shape[:-1]
    if cfg.variant == "concat":
        zo = reshape(z, zb + (1, cfg.n_latent)) * np.ones(others.shape[:-1] + (1,), dtype=z.dtype)
        return concat([self_feat, z], axis=-1), concat([others, zo], axis=-1)
    f = self_feat.shape[-1]
    zs = reshape(z, zb + (1, cfg.n_latent))
    s = reshape(reshape(self_feat, self_feat.shape + (1,)) * zs, self_feat.shape[:-1] + (f * cfg.n_latent,))
    zo = reshape(z, zb + (1, 1, cfg.n_latent))
    o = reshape(reshape(others, others.shape + (1,)) * zo, others.shape[:-2] + (m, f * cfg.n_latent))
    return s, o


def generate_graph(self_feat, others, z, ps: ParamSet, role: int, cfg: ModelConfig) -> Tensor:
    """Graph g = phi(o, z) of shape (..., M); z is (..., |Z|), hard or soft."""
    zt = as_tensor(z)
    if zt.shape[-1] != cfg.n_latent:
        raise ContractError(f"latent has {zt.shape[-1]} classes, expected {cfg.n_latent}")
    self_feat, others = as_tensor(self_feat), as_tensor(others)
    m = others.shape[-2]
    if m == 0:
        return as_tensor(np.zeros(others.shape[:-1], dtype=others.dtype))
    s_in, o_in = _latent_inputs(self_feat, others, zt, cfg)
    heads = head_graphs(s_in, o_in, ps, role, cfg.n_heads)                   # (..., H, M)
    if cfg.variant != "option":
        return reshape(heads, heads.shape[:-2] + (m,))
    zt = reshape(zt, zt.shape[:-1] + (1, cfg.n_latent))
    zt = zt * np.ones(heads.shape[:-2] + (1, 1), dtype=heads.dtype)          # broadcast batch
    return reshape(matmul(zt, heads), heads.shape[:-2] + (m,))


def all_option_graphs(self_feat, others, ps: ParamSet, role: int, cfg: ModelConfig) -> Tensor:
    """Every latent class's graph at once, (..., |Z|, M)."""
    if cfg.variant == "option":
        return head_graphs(self_feat, others, ps, role, cfg.n_heads)
    eye = np.eye(cfg.n_latent, dtype=np.asarray(as_tensor(self_feat).data).dtype)
    gs = []
    for k in range(cfg.n_latent):
        z = np.broadcast_to(eye[k], as_tensor(self_feat).shape[:-1] + (cfg.n_latent,))
        g = generate_graph(self_feat, others, z, ps, role, cfg)
        gs.append(reshape(g, g.shape[:-1] + (1, g.shape[-1])))
    return concat(gs, axis=-2)


def embed(others, g, ps: ParamSet, role: int) -> Tensor:
    """e = sum_j g_j V(o_j); zero vector when there are no other entities."""
    others = as_tensor(others)
    g = as_tensor(g)
    w = ps[f"relnet/{role}/v/w"]
    m = others.shape[-2]
    if m == 0:
        return as_tensor(np.zeros(others.shape[:-2] + (w.shape[-1],), dtype=w.dtype))
    v = linear(others, ps, f"relnet/{role}/v")                               # (..., M, d)
    e = matmul(reshape(g, g.shape[:-1] + (1, m)), v)
    return reshape(e, e.shape[:-2] + (w.shape[-1],))


def relational_embed(obs, ps: ParamSet, role: int, head: int, cfg: ModelConfig) -> tuple[Tensor, Tensor]:
    """Embedding and graph of one head for an :class:`EntityObservation`."""
    if not 0 <= head < cfg.n_latent:
        raise ContractError(f"head {head} out of range")
    z = np.zeros(cfg.n_latent, dtype=np.float32)
    z[head] = 1.0
    g = generate_graph(obs.self_entity, obs.other_entities, z, ps, role, cfg)
    return embed(obs.other_entities, g, ps, role), g


# -- latent distribution -----------------------------------------------------
def init_latent(ps: ParamSet, role: int, n_games: int, cfg: ModelConfig) -> None:
    ps.add(f"latent/{role}/psi", np.zeros((n_games, cfg.n_latent)))


def latent_probs(psi_logits: np.ndarray) -> np.ndarray:
    z = psi_logits - psi_logits.max(axis=-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=-1, keepdims=True)


def sample_latent(psi, game_id: int | None, rng: np.random.Generator, differentiable: bool = False,
                  uniform: bool = False, temperature: float = 1.0, size: tuple = ()) -> Tensor | np.ndarray:
    """Draw z ~ p(z | m; psi).

    ``differentiable`` returns a relaxed Gumbel-softmax Tensor carrying
    gradients to ``psi``; otherwise a hard one-hot numpy array. ``uniform``
    ignores ``psi`` and ``game_id``.
    """
    psi_t = as_tensor(psi)
    n_games, n_latent = psi_t.shape
    if uniform:
        logits = as_tensor(np.zeros(n_latent, dtype=psi_t.dtype))
    else:
        if game_id is None or not 0 <= game_id < n_games:
            raise ContractError(f"unknown game id {game_id} for {n_games} latent rows")
        logits = psi_t[game_id]
    if differentiable:
        ones = np.ones(tuple(size) + (1,), dtype=logits.dtype)
        return gumbel_softmax(logits * ones, temperature, hard=False, rng=rng)
    p = latent_probs(np.asarray(logits.data, dtype=np.float64))
    idx = rng.choice(n_latent, size=size, p=p)
    return np.eye(n_latent, dtype=np.float32)[idx]
