"""Held-out perplexity trace of the topic model on a synthetic corpus."""
import argparse
import csv

from crmslice.experiments import bnb_perplexity_run, window_medians


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--docs", type=int, default=20)
    p.add_argument("--vocab", type=int, default=50)
    p.add_argument("--topics", type=int, default=5)
    p.add_argument("--delta-xi", type=float, default=3.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="perplexity.csv")
    a = p.parse_args()
    res = bnb_perplexity_run(iterations=a.iters, seed=a.seed, D=a.docs, W=a.vocab,
                             n_topics=a.topics, delta_xi=a.delta_xi, workers=a.workers)
    with open(a.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "perplexity", "K"])
        for rec, value in zip(res["trace"], res["perplexity"]):
            w.writerow([rec.iteration, repr(float(value)), rec.K])
    print(f"final perplexity {res['perplexity'][-1]:.3f} (W={res['W']})")
    print("100-iteration medians:", ", ".join(f"{m:.3f}" for m in window_medians(res["perplexity"])))


if __name__ == "__main__":
    main()
