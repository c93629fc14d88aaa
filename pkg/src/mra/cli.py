"""``mra`` command line: train, adapt, eval, oracle and plot pipelines.

Every run directory receives the resolved config (config.yaml) and a
manifest (manifest.json). Exit codes: 0 ok, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

import mra
from mra.config import CHECKS, PLOT_KINDS, RunConfig, apply_env, load_config
from mra.errors import ConfigError, ContractError, NonFiniteError, ParameterError

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _pops(text: str) -> list:
    try:
        return [int(x) for x in text.split(",")]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"populations must be comma-separated integers, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mra", description="Meta representations for multi-agent RL.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML run config; defaults apply when omitted")
        sp.add_argument("--out", help="output directory (overrides config)")
        return sp

    tr = common(sub.add_parser("train", help="meta-train on a game set"))
    tr.add_argument("--episodes", type=int, help="total training episodes")
    tr.add_argument("--populations", type=_pops, nargs="+", help="one population list per game, e.g. 2 4")

    ad = common(sub.add_parser("adapt", help="adapt a checkpoint to a novel game"))
    ad.add_argument("--checkpoint")
    ad.add_argument("--episodes", type=int)
    ad.add_argument("--populations", type=_pops, help="novel game, e.g. 3 or 1,2")
    ad.add_argument("--freeze-theta", action="store_true", default=None)

    ev = common(sub.add_parser("eval", help="zero-shot evaluation or cross-play"))
    ev.add_argument("--checkpoint")
    ev.add_argument("--zero-shot", choices=("expect", "enumerate"))
    ev.add_argument("--cross", action="store_true", default=None)
    ev.add_argument("--runs", type=int)
    ev.add_argument("--populations", type=_pops)
    ev.add_argument("--trajectories", type=int, help="episodes to dump as JSONL")

    orc = common(sub.add_parser("oracle", help="tabular game checks"))
    orc.add_argument("--game", help="plain-text tabular game")
    orc.add_argument("--check", choices=CHECKS)
    orc.add_argument("--eval-game", help="second game for the sigma distance")
    orc.add_argument("--policy", help="uniform, pure:a0,a1,..., or a JSON file of per-agent tables")

    pl = common(sub.add_parser("plot", help="SVG curves from metrics files"))
    pl.add_argument("metrics", nargs="*")
    pl.add_argument("--kind", nargs="+", choices=PLOT_KINDS)
    pl.add_argument("--trajectories", nargs="+", default=None)
    return p


def resolve(args, env=None) -> RunConfig:
    """Config file (or defaults), then command line overrides."""
    cfg = load_config(args.config, env) if args.config else apply_env(RunConfig(), env)
    cfg.command = args.command
    if args.out:
        cfg.output = args.out
    if getattr(args, "checkpoint", None):
        cfg.checkpoint = args.checkpoint
    c = args.command
    if c == "train":
        if args.episodes is not None:
            cfg.train = dataclasses.replace(cfg.train, total_episodes=args.episodes)
        if args.populations:
            cfg.game_set.populations = args.populations
    elif c == "adapt":
        _set(cfg.adapt, episodes=args.episodes, populations=args.populations, freeze_theta=args.freeze_theta)
    elif c == "eval":
        _set(cfg.eval, zero_shot=args.zero_shot, cross=args.cross, runs=args.runs, populations=args.populations,
             trajectories=args.trajectories)
    elif c == "oracle":
        _set(cfg.oracle, game=args.game, check=args.check, eval_game=args.eval_game, policy=args.policy)
    elif c == "plot":
        _set(cfg.plot, metrics=args.metrics or None, kinds=args.kind, trajectories=args.trajectories)
    try:
        cfg.__post_init__()
    except ParameterError as e:
        raise ConfigError(str(e)) from e
    return cfg


def _set(obj, **kw):
    for k, v in kw.items():
        if v is not None:
            setattr(obj, k, v)


# -- run directory -----------------------------------------------------------
def prepare_output(cfg: RunConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.yaml")
    return out


def write_manifest(out: Path, cfg: RunConfig, wall_s: float, extra: dict | None = None) -> None:
    manifest = {"command": cfg.command, "seed": cfg.seed, "wall_s": round(wall_s, 3),
                "versions": {"mra": mra.__version__, "python": platform.python_version(), "numpy": np.__version__},
                **(extra or {})}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _load(path):
    from mra.train import config_from_meta, load_state
    if not path:
        raise UsageError("this command needs --checkpoint")
    if not (Path(path) / "manifest.json").exists():
        raise UsageError(f"checkpoint not found: {path}")
    ps, tg, meta = load_state(path)
    tcfg, game_set = config_from_meta(meta)
    return ps, tg, tcfg, game_set


def _target_spec(game_set, populations):
    from mra.envs import GameSpec
    if populations is None:
        return game_set[0]
    base = game_set[0]
    return GameSpec(base.env_kind, tuple(populations), base.horizon, base.landmarks, base.sparse)


# -- pipelines ---------------------------------------------------------------
def run_train(cfg: RunConfig, out: Path) -> dict:
    from mra.train import train
    game_set = cfg.game_set.build()
    res = train(game_set, cfg.train_config(), out_dir=out)
    return {"episodes": len(res.metrics), "update_blocks": res.trace.count("target")}


def run_adapt(cfg: RunConfig, out: Path) -> dict:
    from mra.adapt import adapt, latent_row, zero_shot_eval
    ps, tg, tcfg, game_set = _load(cfg.checkpoint)
    spec = _target_spec(game_set, cfg.adapt.populations)
    tcfg = dataclasses.replace(tcfg, seed=cfg.seed, **cfg.adapt.overrides())
    rows = [latent_row(game_set, spec)] * spec.n_roles
    before = zero_shot_eval(ps, spec, tcfg.model, rows, cfg.eval.runs, "expect", cfg.seed)
    res = adapt(ps, tg, game_set, spec, tcfg, cfg.adapt.episodes, cfg.adapt.freeze_theta, out_dir=out)
    after = zero_shot_eval(res.params, spec, tcfg.model, rows, cfg.eval.runs, "adapted", cfg.seed)
    (out / "eval_zero_shot.json").write_text(before.to_json())
    (out / "eval_adapted.json").write_text(after.to_json())
    return {"zero_shot_expect": before.role_returns, "adapted": after.role_returns}


def run_eval(cfg: RunConfig, out: Path) -> dict:
    from mra.adapt import cross_play, latent_row, zero_shot_eval
    if cfg.eval.cross:
        return _run_cross(cfg, out, cross_play, latent_row)
    ps, _, tcfg, game_set = _load(cfg.checkpoint)
    spec = _target_spec(game_set, cfg.eval.populations)
    rows = [latent_row(game_set, spec)] * spec.n_roles
    rep = zero_shot_eval(ps, spec, tcfg.model, rows, cfg.eval.runs, cfg.eval.zero_shot, cfg.seed)
    (out / "eval.json").write_text(rep.to_json())
    if cfg.eval.trajectories:
        _dump_trajectories(ps, spec, tcfg.model, rows, cfg, out)
    return {"mode": rep.mode, "role_returns": rep.role_returns, "role_scores": rep.role_scores}


def _dump_trajectories(ps, spec, model, rows, cfg: RunConfig, out: Path) -> None:
    from mra.adapt import _episode_latents
    from mra.rng import stream
    from mra.rollout import dump_trajectories
    n = cfg.eval.trajectories
    lat = _episode_latents(ps, spec, rows, model.n_latent, stream(cfg.seed, "traj-latent"), n)
    dump_trajectories(ps, spec, model, [stream(cfg.seed, "traj-env", k) for k in range(n)], lat,
                      stream(cfg.seed, "traj-act"), out / "trajectories.jsonl")


def _run_cross(cfg: RunConfig, out: Path, cross_play, latent_row) -> dict:
    e = cfg.eval
    paths = {("pacman", "single"): e.pacman_single, ("pacman", "mra"): e.pacman_mra,
             ("ghost", "single"): e.ghost_single, ("ghost", "mra"): e.ghost_mra}
    missing = [f"{r}_{l}" for (r, l), p in paths.items() if not p]
    if missing:
        raise UsageError(f"cross-play needs eval.{', eval.'.join(missing)}")
    loaded = {k: _load(p) for k, p in paths.items()}
    _, _, tcfg, game_set = loaded[("pacman", "mra")]
    spec = _target_spec(game_set, e.populations)
    if spec.env_kind != "pacman":
        raise UsageError("cross-play needs pacman checkpoints")
    models = {v[2].model for v in loaded.values()}
    if len(models) != 1:
        raise UsageError("cross-play checkpoints must share one model config")
    table = {role: {label: (v[0], latent_row(v[3], spec)) for (r, label), v in loaded.items() if r == role}
             for role in ("pacman", "ghost")}
    res = cross_play(table["pacman"], table["ghost"], spec, tcfg.model, e.runs, cfg.seed)
    (out / "cross_play.json").write_text(res.to_json())
    return {"pacman": res.pacman, "ghost": res.ghost}


def _policy(mg, text: str):
    from mra import oracle
    if text == "uniform":
        return oracle.uniform_policy(mg)
    if text.startswith("pure:"):
        return oracle.pure_policy(mg, [int(a) for a in text[5:].split(",")])
    path = Path(text)
    if not path.exists():
        raise UsageError(f"policy must be uniform, pure:..., or a JSON file; got {text!r}")
    return [np.asarray(p, dtype=np.float64) for p in json.loads(path.read_text())]


def _game(path):
    from mra.envs.tabular import TabularMG
    if not path:
        raise UsageError("oracle needs --game")
    if not Path(path).exists():
        raise UsageError(f"game file not found: {path}")
    return TabularMG.load(path)


def run_oracle(cfg: RunConfig, out: Path) -> dict:
    from mra import oracle
    from mra.rng import stream
    o = cfg.oracle
    mg = _game(o.game)
    if o.gamma is not None:
        mg.gamma = o.gamma
    pi = _policy(mg, o.policy)
    if o.check == "nashconv":
        res = {"nashconv": oracle.nashconv(mg, pi), "gains": oracle.agent_gains(mg, pi)}
    elif o.check == "lemma1":
        est = oracle.lipschitz_estimate(mg, o.probes, stream(cfg.seed, "oracle-iota"), include=[pi])
        chk = oracle.lemma1_check(mg, pi, est.value)
        res = {"iota": est.value, "nashconv": chk.lhs, "bound": chk.rhs, "holds": bool(chk.holds),
               "kappas": chk.kappas}
    else:
        other = _game(o.eval_game)
        rep = oracle.sigma_distance([mg], [other], o.resolution, o.tol)
        res = {"sigma": rep.value, "resolution": rep.resolution, "tol": rep.tol, "ne_counts": rep.ne_counts}
    (out / "oracle.json").write_text(json.dumps(res, indent=2, default=float) + "\n")
    return res


def run_plot(cfg: RunConfig, out: Path) -> dict:
    from mra.plots import emit_plots
    if not cfg.plot.metrics and "trajectories" not in cfg.plot.kinds:
        raise UsageError("plot needs at least one metrics file")
    for p in list(cfg.plot.metrics) + list(cfg.plot.trajectories):
        if not Path(p).exists():
            raise UsageError(f"file not found: {p}")
    written = emit_plots(cfg.plot.metrics, cfg.plot.kinds, out, cfg.plot.trajectories)
    return {"written": [str(p) for p in written]}


PIPELINES = {"train": run_train, "adapt": run_adapt, "eval": run_eval, "oracle": run_oracle, "plot": run_plot}


def run(cfg: RunConfig) -> int:
    out = prepare_output(cfg)
    t0 = time.perf_counter()
    try:
        summary = PIPELINES[cfg.command](cfg, out)
    except NonFiniteError as e:
        print(f"mra {cfg.command}: aborted: {e}", file=sys.stderr)
        print(f"diagnostics in {out / 'abort'}", file=sys.stderr)
        return EXIT_RUNTIME
    write_manifest(out, cfg, time.perf_counter() - t0)
    print(json.dumps({"command": cfg.command, "output": str(out), **summary}, default=float))
    return EXIT_OK


def main(argv=None, env=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = resolve(args, env)
        return run(cfg)
    except (UsageError, ConfigError, FileNotFoundError) as e:
        print(f"mra: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ContractError, ParameterError, NonFiniteError, RuntimeError, ValueError) as e:
        print(f"mra {args.command}: failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
