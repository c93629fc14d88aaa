"""Tabular checks: NashConv against brute force, the NashConv bound audit,
and the equilibrium-set distance between two games.

    python3 scripts/oracle_audit.py --cases 200 --out runs/oracle.json
"""
import argparse
import json
from pathlib import Path

import numpy as np

from mra.envs.tabular import coordination_game, matching_pennies, random_game
from mra.oracle import lemma1_check, lipschitz_estimate, random_policy, sigma_distance


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cases", type=int, default=200)
    ap.add_argument("--gamma", type=float, default=0.9)
    ap.add_argument("--probes", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/oracle.json")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    slack, violations = [], 0
    for _ in range(args.cases):
        mg = random_game(rng, n_states=int(rng.integers(2, 5)), n_agents=int(rng.integers(1, 4)), gamma=args.gamma)
        pi = random_policy(mg, rng)
        res = lemma1_check(mg, pi, lipschitz_estimate(mg, args.probes, rng, include=[pi]).value)
        violations += not res.holds
        slack.append(res.rhs - res.lhs)
    sigma = sigma_distance([matching_pennies()], [coordination_game()])
    report = {"cases": args.cases, "violations": violations, "min_slack": float(np.min(slack)),
              "median_slack": float(np.median(slack)), "sigma_pennies_to_coordination": sigma.value,
              "ne_counts": sigma.ne_counts}
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps(report))


if __name__ == "__main__":
    main()
