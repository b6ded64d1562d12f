"""
Walk through one network three ways: clean, under a deception attack,
and under the same attack with the F-local filter switched on.

    python demos/attack_and_defense.py --seed 0
"""

import argparse

import numpy as np

from resdiff.metrics import attack_success, converged
from resdiff.scenario import preset, run_scenario


def report(tr):
    truth = tr.targets()
    plan = tr.setup.plan
    captured = 0
    if plan is not None:
        captured = sum(attack_success(tr, k, plan.goal_of(k)).success for k in tr.victims)
    ok = sum(converged(tr.states[:, k], truth[:, k])[0] for k in tr.normal)
    print(f"  {tr.config.name:<20} MSD {10 * np.log10(tr.steady_msd()):7.2f} dB  "
          f"on target {ok:3d}/{len(tr.normal)}  captured victims {captured}/{len(tr.victims)}  "
          f"links {len(tr.setup.topology.edges())} -> {len(tr.final_topology.edges())}")


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int, default=10_000)
    args = p.parse_args()
    for name in ("stationary-baseline", "stationary-attack", "resilient"):
        cfg = preset(name).replace(seed=args.seed, iterations=args.iterations)
        report(run_scenario(cfg))


if __name__ == "__main__":
    main()
