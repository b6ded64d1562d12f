"""
Compare simulated steady-state MSD with the small step-size formulas on
a single-task network (everyone estimates the same state).

    python demos/msd_theory_vs_simulation.py --runs 5
"""

import argparse

import numpy as np

from resdiff.metrics import msd_theory, to_db
from resdiff.scenario import mean_steady_msd, preset, run_many


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--runs", type=int, default=5)
    args = p.parse_args()
    cfg = preset("single-task").replace(runs=args.runs)
    diff = run_many(cfg)
    ncop = run_many(cfg, algorithm="noncooperative")
    # per-agent noise variances are drawn per run; average the closed form too
    sig = [t.setup.sigma_v_sq for t in diff]
    th_ncop = np.mean([msd_theory("ncop", cfg.mu, cfg.dim, s) for s in sig])
    th_diff = np.mean([msd_theory("diff", cfg.mu, cfg.dim, s) for s in sig])
    print(f"noncooperative  simulated {to_db(mean_steady_msd(ncop)):7.2f} dB   theory {to_db(th_ncop):7.2f} dB")
    print(f"diffusion       simulated {to_db(mean_steady_msd(diff)):7.2f} dB   theory {to_db(th_diff):7.2f} dB")


if __name__ == "__main__":
    main()
