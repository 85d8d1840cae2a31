"""Per-iteration time and ESS/s of the slice sampler over a grid of data sizes."""
import argparse

from crmslice.diagnostics import write_summary_csv
from crmslice.experiments import scaling_study


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--ns", type=int, nargs="+", default=[500, 1000, 2000, 4000])
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--burn-in", type=int, default=100)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--delta-xi", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="scaling.csv")
    a = p.parse_args()
    res = scaling_study(ns=a.ns, iterations=a.iters, burn_in=a.burn_in, seed=a.seed,
                        delta_xi=a.delta_xi, repeats=a.repeats)
    write_summary_csv(res["rows"], a.out)
    print(f"time slope {res['time_slope']:.3f}, ESS/s slope {res['ess_per_sec_slope']:.3f}")


if __name__ == "__main__":
    main()
