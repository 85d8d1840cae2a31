"""Held-out error of the slice sampler against fixed truncations.

The slice scale is first chosen on separately simulated tuning data sets.
"""
import argparse

from crmslice.diagnostics import write_summary_csv
from crmslice.experiments import heldout_comparison, tune_delta_xi


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--burn-in", type=int, default=500)
    p.add_argument("--truncations", type=int, nargs="+", default=[5, 10, 20, 40])
    p.add_argument("--delta-xi", type=float, help="skip tuning and use this scale")
    p.add_argument("--out", default="heldout.csv")
    a = p.parse_args()
    if a.delta_xi is None:
        tuned = tune_delta_xi(iterations=a.iters, burn_in=a.burn_in)
        for dx, score in tuned["scores"].items():
            print(f"tuning delta_xi={dx}: {score:.4f}")
        a.delta_xi = tuned["delta_xi"]
    res = heldout_comparison(seeds=range(a.seeds), truncations=a.truncations, iterations=a.iters,
                             burn_in=a.burn_in, delta_xi=a.delta_xi)
    rows = [{"sampler": k, "seed": s, "heldout_l2": e}
            for k, errs in res["per_seed"].items() for s, e in enumerate(errs)]
    write_summary_csv(rows, a.out)
    for k, v in res.items():
        if k != "per_seed":
            print(f"{k}: {v:.4f}")


if __name__ == "__main__":
    main()
