"""Joint-distribution checks of the slice and fixed-truncation samplers."""
import argparse

from crmslice.geweke import bb_geweke, bnb_geweke


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--model", choices=["beta-bernoulli", "bnb-topic"], default="beta-bernoulli")
    p.add_argument("--chains", type=int)
    p.add_argument("--sweeps", type=int)
    p.add_argument("--n-prior", type=int, default=50_000)
    p.add_argument("--delta-xi", type=float, default=1.0)
    p.add_argument("--K", type=int, help="check the fixed-truncation sampler at this level")
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    kw = {k: v for k, v in dict(chains=a.chains, sweeps=a.sweeps).items() if v is not None}
    fn = bb_geweke if a.model == "beta-bernoulli" else bnb_geweke
    res = fn(n_prior=a.n_prior, delta_xi=a.delta_xi, K_fixed=a.K, seed=a.seed, **kw)
    print(f"{'statistic':<18}{'prior mean':>12}{'chain mean':>12}{'z':>8}")
    for name, pm, cm, z in res.rows():
        print(f"{name:<18}{pm:>12.5f}{cm:>12.5f}{z:>8.2f}")
    print("PASS" if res.passed() else "FAIL", f"max |z| = {res.max_abs_z():.2f}")


if __name__ == "__main__":
    main()
