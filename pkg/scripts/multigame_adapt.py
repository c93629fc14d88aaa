"""Meta-train on several populations, then adapt to an unseen one.

Reports zero-shot (expect and enumerate) and adapted scores on the novel
population, using the settings in configs/multigame.yaml.

    python3 scripts/multigame_adapt.py --out runs/multigame
"""
import argparse
import dataclasses
import json
from pathlib import Path

from mra.adapt import adapt, latent_row, zero_shot_eval
from mra.config import load_config
from mra.plots import emit_plots
from mra.train import train

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(HERE / "configs/multigame.yaml"))
    ap.add_argument("--runs", type=int, default=None, help="evaluation runs per latent assignment")
    ap.add_argument("--out", default="runs/multigame")
    args = ap.parse_args()

    run = load_config(args.config)
    out = Path(args.out)
    game_set = run.game_set.build()
    cfg = run.train_config()
    res = train(game_set, cfg, out_dir=out / "train")
    novel = run.game_set.spec(run.adapt.populations)
    rows = [latent_row(game_set, novel)] * novel.n_roles
    runs = args.runs or run.eval.runs
    report = {"expect": zero_shot_eval(res.params, novel, cfg.model, rows, runs, "expect", run.seed),
              "enumerate": zero_shot_eval(res.params, novel, cfg.model, rows, runs, "enumerate", run.seed)}
    ad = adapt(res.params, res.targets, game_set, novel, dataclasses.replace(cfg, **run.adapt.overrides()),
               run.adapt.episodes, run.adapt.freeze_theta, out_dir=out / "adapt")
    report["adapted"] = zero_shot_eval(ad.params, novel, cfg.model, rows, runs, "adapted", run.seed)
    for name, rep in report.items():
        (out / f"eval_{name}.json").write_text(rep.to_json())
        print(f"{name:10s} return {rep.role_returns} score {rep.role_scores}")
    emit_plots([out / "train/metrics.jsonl"], ["returns", "mi", "aux_loss"], out / "plots")
    print(json.dumps({k: v.role_returns for k, v in report.items()}))


if __name__ == "__main__":
    main()
