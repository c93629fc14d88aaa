"""Cross-play between single-game and multi-game pac-man/ghost checkpoints.

Trains one checkpoint on a single population and one on several, then plays
all four ghost x pac-man pairings and writes both normalized score tables.

    python3 scripts/cross_play.py --episodes 600 --out runs/cross
"""
import argparse
import dataclasses
from pathlib import Path

from mra.adapt import cross_play, latent_row
from mra.config import load_config
from mra.envs import make_game_set
from mra.train import train

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(HERE / "configs/pacman.yaml"))
    ap.add_argument("--episodes", type=int, default=None)
    ap.add_argument("--multi", default="1,1;1,2;1,3", help="populations of the multi-game set")
    ap.add_argument("--out", default="runs/cross")
    args = ap.parse_args()

    run = load_config(args.config)
    cfg = run.train_config()
    if args.episodes:
        cfg = dataclasses.replace(cfg, total_episodes=args.episodes)
    g = run.game_set
    single = make_game_set("pacman", g.populations[:1], g.horizon, g.landmarks, g.sparse)
    multi = make_game_set("pacman", [[int(x) for x in p.split(",")] for p in args.multi.split(";")],
                          g.horizon, g.landmarks, g.sparse)
    out = Path(args.out)
    spec = single[0]
    table = {}
    for label, gs in (("single", single), ("mra", multi)):
        res = train(gs, cfg, out_dir=out / label)
        table[label] = (res.params, latent_row(gs, spec))
    res = cross_play(table, table, spec, cfg.model, run.eval.runs, run.seed)
    (out / "cross_play.json").write_text(res.to_json())
    for role, norm in (("pac-man", res.pacman), ("ghost", res.ghost)):
        print(f"{role} scores (rows: ghost single/mra, columns: pac-man single/mra)")
        for label, row in zip(res.labels, norm):
            print(f"  {label:6s} " + "  ".join(f"{v:.2f}" for v in row))


if __name__ == "__main__":
    main()
