"""Learning check on two-agent treasure collection, several seeds.

Measures the frozen random-init policy first, trains, then evaluates the
trained policy on the same episodes. Writes per-seed metrics and a return
curve with the min/max band across seeds.

    python3 scripts/treasure_learning.py --seeds 4 --out runs/treasure
"""
import argparse
import dataclasses
import json
from pathlib import Path

import numpy as np

from mra.config import load_config
from mra.plots import emit_plots
from mra.rng import stream
from mra.rollout import run_episodes
from mra.train import Learner, draw_latents, train

HERE = Path(__file__).resolve().parent


def evaluate(ps, spec, cfg, seed, n):
    lat = draw_latents(ps, spec, 0, cfg.model, stream(seed, "accept-latent"), n)
    r, s = run_episodes(ps, spec, cfg.model, [stream(seed, "accept-env", k) for k in range(n)], lat,
                        stream(seed, "accept-act"))
    return float(r.mean()), float(s.mean())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(HERE / "configs/treasure.yaml"))
    ap.add_argument("--seeds", type=int, default=4)
    ap.add_argument("--episodes", type=int, default=None)
    ap.add_argument("--eval-episodes", type=int, default=200)
    ap.add_argument("--out", default="runs/treasure")
    args = ap.parse_args()

    run = load_config(args.config)
    game_set = run.game_set.build()
    out = Path(args.out)
    rows = []
    for seed in range(args.seeds):
        cfg = dataclasses.replace(run.train, seed=seed)
        if args.episodes:
            cfg = dataclasses.replace(cfg, total_episodes=args.episodes)
        rand = evaluate(Learner(game_set, cfg).ps, game_set[0], cfg, seed, args.eval_episodes)
        res = train(game_set, cfg, out_dir=out / f"seed{seed}")
        done = evaluate(res.params, game_set[0], cfg, seed, args.eval_episodes)
        rows.append({"seed": seed, "random_return": rand[0], "random_score": rand[1],
                     "trained_return": done[0], "trained_score": done[1]})
        print(json.dumps(rows[-1]))
    summary = {k: float(np.mean([r[k] for r in rows])) for k in rows[0] if k != "seed"}
    summary["score_ratio"] = summary["trained_score"] / summary["random_score"]
    (out / "summary.json").write_text(json.dumps({"seeds": rows, "mean": summary}, indent=2) + "\n")
    emit_plots([out / f"seed{s}/metrics.jsonl" for s in range(args.seeds)], ["returns", "mi"], out / "plots")
    print(json.dumps(summary))


if __name__ == "__main__":
    main()
