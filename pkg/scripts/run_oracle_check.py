#!/usr/bin/env python3
"""Compare SMC against the prior importance-sampling oracle on a tiny
dataset, across seeds.

The two estimators target the same posterior by entirely different routes,
so their P(edge) estimates should agree up to Monte Carlo error.
"""
import argparse

import numpy as np

from ministan.harness import default_plan, generate_data
from ministan.inference import SMCConfig, is_oracle, posterior_summary, smc_infer


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--records", type=int, default=2, help="observational records (<= 5)")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--particles", type=int, default=10_000)
    ap.add_argument("--is-samples", type=int, default=100_000)
    ap.add_argument("--sweeps", type=int, default=2)
    args = ap.parse_args()

    plan = default_plan()
    data = generate_data(plan, seed=[0, 0])
    obs = data[0]
    tiny = type(obs)(obs.name, obs.intervention, obs.observed_vars, obs.records[: args.records])

    diffs = []
    for seed in range(args.seeds):
        cfg = SMCConfig(
            n_particles=args.particles,
            ess_threshold=0.8,
            rejuvenation_sweeps=args.sweeps,
            seed=[seed, 1],
        )
        p_smc = posterior_summary(smc_infer([tiny], cfg))["p_edge"]
        p_is = is_oracle([tiny], args.is_samples, seed=[seed, 2])["p_edge"]
        diffs.append(p_smc - p_is)
        print(f"seed {seed:3d}  smc {p_smc:.4f}  oracle {p_is:.4f}  diff {p_smc - p_is:+.4f}")

    print(f"\nmean diff {np.mean(diffs):+.4f}   mean |diff| {np.mean(np.abs(diffs)):.4f}")


if __name__ == "__main__":
    main()
