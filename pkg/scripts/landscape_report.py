#!/usr/bin/env python3
"""Cost-landscape summary: how far each baseline sits above exhaustive search.

Prints, for a frozen probe, the mean weighted cost of the random,
cloud-only, and average-distribution placements against the exact optimum,
plus the share of twins the optimum puts on the cloud.  A quick check that
the landscape is neither trivial (everything cloud) nor degenerate before
committing to longer training runs.
"""

import argparse

import numpy as np

from dtplace.exact import solve_exact
from dtplace.harness import make_probe, scheme_means
from dtplace.scenario import GeneratorConfig


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--probe", type=int, default=64, help="probe scenario count")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--alpha", type=float, default=0.5, help="latency weight")
    parser.add_argument("--devices", type=int, default=24)
    parser.add_argument("--dts", type=int, default=6)
    parser.add_argument("--edges", type=int, default=3)
    args = parser.parse_args()
    config = GeneratorConfig(
        num_devices=args.devices,
        num_dts=args.dts,
        num_edge_servers=args.edges,
        alpha=args.alpha,
        server_seed=args.seed,
    )
    probe = make_probe(args.seed + 1, args.probe, config)
    means = scheme_means(probe)
    print(f"probe: {len(probe)} scenarios, alpha {args.alpha:g}, pool seed {args.seed}")
    if "exact" not in means:
        print("search space above the enumeration cap; no exact reference")
        for name in ("ro", "co", "ad"):
            print(f"{name}: mean Q {means[name]:.4f}")
        return 0
    exact = means["exact"]
    print(f"exact: mean Q {exact:.4f}")
    for name in ("ro", "co", "ad"):
        over = 100 * (means[name] / exact - 1)
        print(f"{name}: mean Q {means[name]:.4f}  (+{over:.1f}% over exact)")
    cloud = config.num_edge_servers
    share = np.mean(
        [
            np.mean([a == cloud for a in solve_exact(s).decision.assignment])
            for s in probe.scenarios
        ]
    )
    print(f"optimal cloud share: {100 * share:.1f}% of twins")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
