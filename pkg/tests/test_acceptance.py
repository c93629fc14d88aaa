"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` or
``python3 tests/test_acceptance.py``. The learning checks (8, 9) take about
11 of the 13 minutes.
"""
import dataclasses
import filecmp
import itertools
import time
from pathlib import Path

import numpy as np
import pytest

from brute import nashconv_exhaustive
from conftest import central_diff, rel_err
from toys import MODEL, toy_batch, two_head_params
from mra.adapt import adapt, latent_row, zero_shot_eval
from mra.autodiff import Adam, ParamSet, grad, log_softmax, softmax, tanh
from mra.autodiff.nn import add_linear, add_mlp, linear, mlp
from mra.cli import main as cli_main
from mra.envs import GameSpec, ParticleEnv, make_game_set
from mra.envs.tabular import matching_pennies, random_game
from mra.oracle import lemma1_check, lipschitz_estimate, nashconv, pure_policy, random_policy, uniform_policy
from mra.relnet import ModelConfig, embed, generate_graph, init_relnet, relational_embed
from mra.rng import stream
from mra.rollout import run_episodes
from mra.train import (
    Learner, TrainConfig, draw_latents, implied_mi, init_aux, mi_action_bound, mixed_aux_loss,
    reptile_outer_update, train, xi_names,
)

RESULTS = {}

# end-to-end learning setup shared by criteria 8 and 9
LEARN = TrainConfig(batch_size=256, critic_lr=1e-3, warmup_blocks=60, pg_estimator="all_actions",
                    model=ModelConfig(width=64, hidden=64))
# adaptation: one update per lockstep step, larger step size
ADAPT = dict(min_steps_per_update=12, beta=1e-3)


def report(n: int, ok: bool, detail: str, seconds: float) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} ({seconds:.1f}s) {detail}"
    RESULTS[n] = line
    print(line)


# -- 1 -----------------------------------------------------------------------
def _random_network(rng):
    """A small random net: MLP trunk, optional attention pooling, random loss head."""
    ps = ParamSet(dtype=np.float64)
    d_in = int(rng.integers(2, 7))
    widths = [d_in] + [int(rng.integers(2, 9)) for _ in range(rng.integers(1, 4))]
    add_mlp(ps, "trunk", widths, rng)
    n_out = int(rng.integers(2, 5))
    add_linear(ps, "head", widths[-1], n_out, rng)
    attend = bool(rng.integers(2))
    if attend:
        add_linear(ps, "key", widths[-1], 1, rng)
    for k in ps.names():
        ps[k].data[...] = rng.normal(size=ps[k].shape) * 0.7
    x = rng.normal(size=(int(rng.integers(2, 6)), int(rng.integers(1, 4)), d_in))
    labels = rng.integers(0, n_out, size=x.shape[0])
    target = rng.normal(size=(x.shape[0], n_out))
    kind = rng.choice(["ce", "mse", "tanh"])

    def loss():
        h = mlp(x, ps, "trunk", len(widths) - 1)
        if attend:
            w = softmax(linear(h, ps, "key"), axis=1)
            h = (w * h).sum(axis=1)
        else:
            h = h.mean(axis=1)
        out = linear(h, ps, "head")
        if kind == "ce":
            lp = log_softmax(out)
            return -(lp * np.eye(n_out)[labels]).sum() * (1.0 / len(labels))
        if kind == "mse":
            return ((out - target) ** 2).mean()
        return (tanh(out) * target).sum()
    return ps, loss


def test_criterion_01_autodiff_soundness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst, sizes = 0.0, []
    for _ in range(100):
        ps, loss = _random_network(rng)
        sizes.append(ps.num_params())
        params = [ps[k] for k in ps.names()]
        _, g = grad(loss, params)
        fd = central_diff(lambda: loss().item(), [p.data for p in params], h=1e-5)
        worst = max(worst, rel_err(np.concatenate([a.ravel() for a in g]),
                                   np.concatenate([a.ravel() for a in fd])))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-3 and max(sizes) <= 1000 and dt < 60
    report(1, ok, f"100 nets, max params {max(sizes)}, worst relative error {worst:.2e} (tol 1e-3)", dt)
    assert ok


# -- 2 -----------------------------------------------------------------------
def test_criterion_02_relational_contract():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    sum_err, perm_err, widths = 0.0, 0.0, set()
    cfg = ModelConfig()
    for variant in ("option", "concat", "bilinear"):
        mc = dataclasses.replace(cfg, variant=variant)
        env0 = ParticleEnv(GameSpec("treasure", (2,)))
        ps = ParamSet()
        init_relnet(ps, 0, env0.width, mc, rng)
        for n in range(2, 25):
            env = ParticleEnv(GameSpec("treasure", (n,)))
            _, obs = env.reset(stream(2, variant, n))
            a = obs.agent(0)
            z = rng.dirichlet(np.ones(mc.n_latent))
            g = generate_graph(a.self_entity, a.other_entities, z, ps, 0, mc).data
            sum_err = max(sum_err, abs(float(g.sum()) - 1.0))
            perm = rng.permutation(n - 1)
            gp = generate_graph(a.self_entity, a.other_entities[perm], z, ps, 0, mc).data
            e = embed(a.other_entities, g, ps, 0).data
            ep = embed(a.other_entities[perm], gp, ps, 0).data
            perm_err = max(perm_err, float(np.abs(gp - g[perm]).max()), float(np.abs(ep - e).max()))
            if variant == "option":
                widths.add(relational_embed(a, ps, 0, 0, mc)[0].shape)
    ok = sum_err <= 1e-6 and perm_err <= 1e-6 and widths == {(cfg.width,)}
    report(2, ok, f"sum error {sum_err:.1e}, permutation error {perm_err:.1e}, widths {sorted(widths)} "
                  f"for populations 2..24", time.perf_counter() - t0)
    assert ok


# -- 3 -----------------------------------------------------------------------
def test_criterion_03_nash_oracle():
    t0 = time.perf_counter()
    mp = matching_pennies()
    uni = nashconv(mp, uniform_policy(mp))
    hh = nashconv(mp, pure_policy(mp, [0, 0]))
    hh_brute = nashconv_exhaustive(mp, pure_policy(mp, [0, 0]))
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        n_actions = int(rng.integers(2, 4))
        mg = random_game(rng, n_states=int(rng.integers(1, 5)), n_agents=2, n_actions=n_actions,
                         gamma=float(rng.uniform(0.0, 0.9)))
        pi = random_policy(mg, rng)
        worst = max(worst, abs(nashconv(mg, pi) - nashconv_exhaustive(mg, pi)))
    dt = time.perf_counter() - t0
    ok = abs(uni) <= 1e-8 and hh == 2.0 and hh_brute == 2.0 and worst <= 1e-6 and dt < 120
    report(3, ok, f"uniform {uni:.1e}, pure H,H {hh} (brute {hh_brute}), worst gap vs brute force "
                  f"{worst:.1e} on 100 games", dt)
    assert ok


# -- 4 -----------------------------------------------------------------------
def test_criterion_04_lemma1_audit():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    violations, slack = 0, np.inf
    for _ in range(200):
        mg = random_game(rng, n_states=int(rng.integers(2, 5)), n_agents=int(rng.integers(1, 4)),
                         n_actions=int(rng.integers(2, 4)), gamma=0.9)
        assert mg.rewards_in_unit_interval()
        pi = random_policy(mg, rng)
        iota = lipschitz_estimate(mg, 20, rng, include=[pi]).value
        res = lemma1_check(mg, pi, iota)
        violations += not res.holds
        slack = min(slack, res.rhs - res.lhs)
    dt = time.perf_counter() - t0
    ok = violations == 0 and dt < 300
    report(4, ok, f"{violations} violations in 200 pairs, min slack {slack:.3g}", dt)
    assert ok


# -- 5 -----------------------------------------------------------------------
def _reptile_delta(beta, K, tasks, theta0):
    """Exact E[theta' - theta0] over i.i.d. task sequences; inner SGD on a (theta - c)^2 / 2."""
    total = 0.0
    for seq in itertools.product(tasks, repeat=K):
        th = np.array(theta0)
        for a, c in seq:
            th = th - beta * a * (th - c)
        total = total + reptile_outer_update(np.array(theta0), th, 1.0) - theta0
    return float(total) / len(tasks) ** K


def test_criterion_05_reptile_expansion():
    t0 = time.perf_counter()
    tasks = [(0.5, 1.0), (1.0, -0.5), (2.0, 2.0), (1.5, 0.3)]
    theta0, K = 0.3, 3
    eg = np.mean([-a * (theta0 - c) for a, c in tasks])     # mean descent direction
    eh = np.mean([a for a, _ in tasks])
    residuals = []
    for beta in 1e-3 / 2.0 ** np.arange(4):
        pred = beta * K * eg - beta ** 2 * K * (K - 1) / 2 * eh * eg
        residuals.append(abs(_reptile_delta(beta, K, tasks, theta0) - pred))
    ratios = np.array(residuals[:-1]) / np.array(residuals[1:])
    ok = bool(np.all(ratios >= 4.0))
    report(5, ok, f"residual ratios per halving {np.round(ratios, 3).tolist()} (need >= 4)",
           time.perf_counter() - t0)
    assert ok


# -- 6 -----------------------------------------------------------------------
def test_criterion_06_mi_bound_exactness():
    t0 = time.perf_counter()
    ps = two_head_params()
    val = mi_action_bound(ps, ps, toy_batch(), 0, MODEL, np.random.default_rng(0), enumerate_=True).item()
    flat = two_head_params(ignore_g=True)
    zeros = [mi_action_bound(flat, flat, toy_batch(), 0, MODEL, np.random.default_rng(s), n_marginal=3,
                             enumerate_=e).item() for s in range(3) for e in (True, False)]
    ok = abs(val - np.log(2)) <= 1e-6 and all(z == 0.0 for z in zeros)
    report(6, ok, f"bound {val:.9f} vs ln 2 = {np.log(2):.9f}; ignoring g gives {sorted(set(zeros))}",
           time.perf_counter() - t0)
    assert ok


# -- 7 -----------------------------------------------------------------------
def test_criterion_07_aux_mi_identity():
    """Two games over the same observations; game m pays for head m.

    psi follows the exact expected payoff plus the aux loss, xi learns to name
    the game from (o, g). The implied MI is read on fresh latent draws.
    """
    t0 = time.perf_counter()
    ps = two_head_params(n_games=2)
    init_aux(ps, 0, 2, 2, 8, np.random.default_rng(7))
    b = toy_batch(32)
    batches = {0: b, 1: b}
    keys = xi_names(ps) + ["latent/0/psi"]
    params = [ps[k] for k in keys]
    opt = Adam(params, 0.05)
    payoff = np.eye(2)

    def objective(rng):
        p = softmax(ps["latent/0/psi"], axis=-1)
        return mixed_aux_loss(ps, batches, MODEL, rng) - (p * payoff).sum() * 0.5

    top = np.log(2)
    implied, raw = [], []
    for t in range(300):
        _, g = grad(lambda: objective(stream(7, "train", t)), params)
        opt.step(g)
        loss = mixed_aux_loss(ps, batches, MODEL, stream(7, "eval", t)).item()
        raw.append(top - loss)
        implied.append(implied_mi(loss, 2))
    implied = np.array(implied)
    in_range = bool(np.all((implied >= 0) & (implied <= top)))
    final = implied[-1] / top
    ok = in_range and final >= 0.8
    report(7, ok, f"implied MI in [0, log 2] at all 300 steps: {in_range} (raw range "
                  f"[{min(raw):.4f}, {max(raw):.4f}]); final {final:.3f} x log|M| (need >= 0.8)",
           time.perf_counter() - t0)
    assert ok


# -- 8 -----------------------------------------------------------------------
def _evaluate(ps, spec, cfg, seed, n=200):
    """Mean shaped return and sparse score over n episodes with latents from psi row 0."""
    lat = draw_latents(ps, spec, 0, cfg.model, stream(seed, "accept-latent"), n)
    r, s = run_episodes(ps, spec, cfg.model, [stream(seed, "accept-env", k) for k in range(n)], lat,
                        stream(seed, "accept-act"))
    return float(r.mean()), float(s.mean())


@pytest.mark.slow
def test_criterion_08_end_to_end_learning():
    """2 agents, 2 treasures, horizon 20, 2000 episodes, 4 seeds.

    Returns are negative under distance shaping, so the 2x comparison uses the
    sparse score (treasures collected per agent and episode); shaped returns
    are reported alongside.
    """
    t0 = time.perf_counter()
    gs = make_game_set("treasure", [[2]], horizon=20, landmarks=2)
    rand, trained = [], []
    for seed in range(4):
        cfg = dataclasses.replace(LEARN, total_episodes=2000, seed=seed)
        rand.append(_evaluate(Learner(gs, cfg).ps, gs[0], cfg, seed))
        res = train(gs, cfg)
        trained.append(_evaluate(res.params, gs[0], cfg, seed))
    rand, trained = np.array(rand), np.array(trained)
    r_score, t_score = rand[:, 1].mean(), trained[:, 1].mean()
    dt = time.perf_counter() - t0
    ok = t_score >= 2 * r_score
    report(8, ok, f"score trained {t_score:.4f} vs random {r_score:.4f} ({t_score / r_score:.2f}x, need 2x); "
                  f"per seed {np.round(trained[:, 1], 4).tolist()}; shaped return {trained[:, 0].mean():.3f} "
                  f"vs {rand[:, 0].mean():.3f}; runtime target 900s", dt)
    assert ok


# -- 9 -----------------------------------------------------------------------
@pytest.mark.slow
def test_criterion_09_multigame_adaptation():
    t0 = time.perf_counter()
    gs = make_game_set("treasure", [[2], [4]])
    cfg = dataclasses.replace(LEARN, total_episodes=800, seed=0)
    res = train(gs, cfg)
    novel = GameSpec("treasure", (3,))
    rows = [latent_row(gs, novel)]
    runs = 100
    before = zero_shot_eval(res.params, novel, cfg.model, rows, runs, "expect", seed=9)
    ad = adapt(res.params, res.targets, gs, novel, dataclasses.replace(cfg, **ADAPT), 200)
    after = zero_shot_eval(ad.params, novel, cfg.model, rows, runs, "adapted", seed=9)
    # max dominance in every evaluation: each game, before and after adaptation
    dominance = []
    for ps in (res.params, ad.params):
        for spec in (gs[0], novel, gs[1]):
            r = [latent_row(gs, spec)]
            e = zero_shot_eval(ps, spec, cfg.model, r, runs, "expect", seed=9)
            m = zero_shot_eval(ps, spec, cfg.model, r, runs, "enumerate", seed=9)
            dominance.append(all(a >= b for a, b in zip(m.role_returns + m.role_scores,
                                                         e.role_returns + e.role_scores)))
    gain = after.role_returns[0] >= before.role_returns[0]
    ok = gain and all(dominance)
    report(9, ok, f"population 3: adapted return {after.role_returns[0]:.3f} vs zero-shot expect "
                  f"{before.role_returns[0]:.3f} (score {after.role_scores[0]:.4f} vs "
                  f"{before.role_scores[0]:.4f}); enumerate >= expect in {sum(dominance)}/{len(dominance)} "
                  f"evaluations", time.perf_counter() - t0)
    assert ok


# -- 10 ----------------------------------------------------------------------
RUN_YAML = """\
seed: 4
game_set:
  populations: [[2], [3]]
train:
  total_episodes: 24
  batch_size: 32
  parallel: 4
  min_steps_per_update: 40
  checkpoint_every: 8
  model:
    n_latent: 3
    width: 8
    hidden: 8
adapt:
  episodes: 12
  populations: [4]
eval:
  runs: 3
  trajectories: 2
"""


def _run_all(root: Path, cfg: Path) -> Path:
    for argv in (["train", "--out", root / "train"],
                 ["adapt", "--checkpoint", root / "train/checkpoint", "--out", root / "adapt"],
                 ["eval", "--checkpoint", root / "adapt/checkpoint", "--zero-shot", "enumerate",
                  "--out", root / "eval"]):
        assert cli_main([str(a) for a in argv[:1] + ["--config", cfg] + argv[1:]], env={}) == 0
    return root


def _outputs(root: Path) -> list:
    skip = {"manifest.json", "config.yaml"}       # wall time and output paths
    return sorted(p.relative_to(root) for p in root.rglob("*")
                  if p.is_file() and not (p.name in skip and p.parent.parent == root))


def test_criterion_10_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "run.yaml"
    cfg.write_text(RUN_YAML)
    a = _run_all(tmp_path / "a", cfg)
    b = _run_all(tmp_path / "b", cfg)
    files = _outputs(a)
    same = files == _outputs(b) and all(filecmp.cmp(a / f, b / f, shallow=False) for f in files)
    n_ckpt = sum(1 for f in files if f.name == "tensors.bin")
    n_metrics = sum(1 for f in files if f.name == "metrics.jsonl")
    ok = same and n_ckpt >= 4 and n_metrics == 2
    report(10, ok, f"{len(files)} files byte-identical across reruns ({n_metrics} metrics files, "
                   f"{n_ckpt} checkpoints, eval and trajectory dumps)", time.perf_counter() - t0)
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-s", "-q"]))
