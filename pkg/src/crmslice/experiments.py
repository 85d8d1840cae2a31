"""Reusable experiment drivers behind the scripts and the acceptance checks."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import SyntheticSpec, gen_bb_synthetic, gen_topic_corpus, split_words
from .diagnostics import Trace, ess_batch_means, heldout_l2, scaling_fit
from .engine import SliceSampler
from .kernels import RwConfig
from .models.bb import BbParams, BetaBernoulliModel
from .models.bnb import BnbParams, BnbTopicModel, PerplexityTracker
from .truncated import TruncatedSampler


@dataclass
class BbRun:
    trace: Trace
    psi_samples: list = field(default_factory=list)
    table_seconds: float = 0.0


def make_bb_sampler(Y, params: BbParams, sampler: str = "slice", K_fixed: int | None = None,
                    delta_xi: float = 1.0, rw: RwConfig | None = None, seed=0, workers: int = 1,
                    check: bool = False, cache_dir=None, zero_set_form: str = "exact"):
    model = BetaBernoulliModel(Y, params, zero_set_form=zero_set_form, cache_dir=cache_dir)
    t0 = time.perf_counter()
    if sampler == "slice":
        model.zero_set()
    table_seconds = time.perf_counter() - t0
    if sampler == "slice":
        s = SliceSampler(model, delta_xi=delta_xi, rw=rw, seed=seed, workers=workers, check=check)
    elif sampler == "truncated":
        s = TruncatedSampler(model, K_fixed, rw=rw, seed=seed, workers=workers, check=check)
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    return s, table_seconds


def active_features(model: BetaBernoulliModel) -> np.ndarray:
    m = model.m[:model.K]
    return model.psi[:model.K][m > 0].copy()


def run_bb(Y, params: BbParams, iterations: int, burn_in: int | None = None, thin: int = 1,
           **sampler_kw) -> BbRun:
    """Run one chain and keep active-feature samples after burn-in."""
    sampler, table_seconds = make_bb_sampler(Y, params, **sampler_kw)
    burn_in = iterations // 2 if burn_in is None else burn_in
    out = BbRun(Trace(), table_seconds=table_seconds)

    def keep(s, rec):
        out.trace.append(rec)
        if rec.iteration > burn_in and (rec.iteration - burn_in) % thin == 0:
            out.psi_samples.append(active_features(s.model))

    sampler.run(iterations, callback=keep)
    sampler.close()
    return out


def bb_heldout_regime(seed: int, n_train: int = 300, n_test: int = 200, K_true: int = 20,
                      c: float = 2.0, sigma: float = 0.5, sigma0: float = 0.5, dim=None):
    """Train/test matrices from the small held-out regime."""
    spec = SyntheticSpec(N=n_train + n_test, K_true=K_true, D=dim, sigma=sigma, sigma0=sigma0,
                         c=c, seed=seed)
    Y, _, _ = gen_bb_synthetic(spec)
    return Y[:n_train], Y[n_train:]


def heldout_comparison(seeds=range(5), truncations=(5, 10, 20, 40), iterations: int = 1000,
                       burn_in: int = 500, thin: int = 10, delta_xi: float = 1.0,
                       n_train: int = 300, n_test: int = 200, K_true: int = 20, c: float = 2.0,
                       sigma: float = 0.5, sigma0: float = 0.5, method: str = "auto") -> dict:
    """Mean held-out error over seeds for the slice sampler and each fixed truncation."""
    params = BbParams(sigma=sigma, sigma0=sigma0, c=c)
    errors = {"slice": []}
    errors.update({f"K={K}": [] for K in truncations})
    for seed in seeds:
        Ytr, Yte = bb_heldout_regime(seed, n_train, n_test, K_true, c, sigma, sigma0)
        configs = [("slice", dict(sampler="slice", delta_xi=delta_xi))]
        configs += [(f"K={K}", dict(sampler="truncated", K_fixed=K)) for K in truncations]
        for name, kw in configs:
            run = run_bb(Ytr, params, iterations, burn_in=burn_in, thin=thin, seed=seed, **kw)
            errors[name].append(heldout_l2(Yte, run.psi_samples, method=method))
    return {k: float(np.mean(v)) for k, v in errors.items()} | {"per_seed": errors}


def tune_delta_xi(grid=(0.5, 1.0, 1.5, 2.0, 2.5, 3.0), seeds=(100, 101, 102),
                  iterations: int = 1000, burn_in: int = 500, thin: int = 10, n_train: int = 300,
                  n_test: int = 200, K_true: int = 20, c: float = 2.0, sigma: float = 0.5,
                  sigma0: float = 0.5, method: str = "auto") -> dict:
    """Pick the slice scale with the lowest held-out error on tuning datasets.

    The tuning datasets are simulated from the same regime with their own
    seeds, so the evaluation data never enter the choice.
    """
    params = BbParams(sigma=sigma, sigma0=sigma0, c=c)
    scores = {}
    for dx in grid:
        errs = []
        for seed in seeds:
            Ytr, Yte = bb_heldout_regime(seed, n_train, n_test, K_true, c, sigma, sigma0)
            run = run_bb(Ytr, params, iterations, burn_in=burn_in, thin=thin, seed=seed,
                         sampler="slice", delta_xi=dx)
            errs.append(heldout_l2(Yte, run.psi_samples, method=method))
        scores[dx] = float(np.mean(errs))
    return {"delta_xi": min(scores, key=scores.get), "scores": scores}


def mh_acceptance(N: int = 300, iterations: int = 300, seed: int = 0, n_gamma: int = 10,
                  delta_xi: float = 1.0, sigma: float = 0.2, sigma0: float = 0.5,
                  c: float = 1.0) -> dict:
    """Average arrival acceptance of a slice chain on the synthetic regime."""
    Y, _, _ = gen_bb_synthetic(SyntheticSpec(N=N, sigma=sigma, sigma0=sigma0, c=c, seed=seed))
    run = run_bb(Y, BbParams(sigma, sigma0, c), iterations, burn_in=iterations,
                 rw=RwConfig(n_gamma=n_gamma), delta_xi=delta_xi, seed=seed)
    t = run.trace
    sub1 = np.array([e["accept_sub1"] for e in t.extras], dtype=float)
    sub2 = np.array([e["accept_sub2"] for e in t.extras], dtype=float)
    n1 = np.array([max(e["K_prev"] - 1, 0) for e in t.extras], dtype=float)
    both = np.nansum(sub1 * n1) + np.nansum(sub2)
    count = n1[np.isfinite(sub1)].sum() + np.isfinite(sub2).sum()
    return {"sub1": t.mean_acceptance("accept_sub1"), "sub2": t.mean_acceptance("accept_sub2"),
            "overall": float(both / count)}


def scaling_study(ns=(500, 1000, 2000, 4000), iterations: int = 1000, burn_in: int = 100,
                  seed: int = 0, delta_xi: float = 1.0, sigma: float = 0.2, sigma0: float = 0.5,
                  c: float = 1.0, repeats: int = 1) -> dict:
    """Per-iteration time and ESS/s of the parity statistic across data sizes."""
    rows = []
    for N in ns:
        for rep in range(repeats):
            spec = SyntheticSpec(N=N, sigma=sigma, sigma0=sigma0, c=c, seed=seed + rep)
            Y, _, _ = gen_bb_synthetic(spec)
            run = run_bb(Y, BbParams(sigma, sigma0, c), iterations, burn_in=iterations,
                         delta_xi=delta_xi, seed=seed + rep)
            summ = run.trace.summary(burn_in=burn_in)
            rows.append({"N": N, "repeat": rep,
                         "sec_per_iter": summ["seconds"] / (iterations - burn_in),
                         "ess": summ["ess"], "ess_per_sec": summ["ess_per_sec"],
                         "accept_sub1": summ["accept_sub1"]})
    n = [r["N"] for r in rows]
    return {"rows": rows,
            "time_slope": scaling_fit(n, [r["sec_per_iter"] for r in rows]),
            "ess_per_sec_slope": scaling_fit(n, [r["ess_per_sec"] for r in rows])}


def bnb_perplexity_run(iterations: int = 500, seed: int = 0, D: int = 20, W: int = 50,
                       n_topics: int = 5, delta_xi: float = 3.0, test_frac: float = 0.3,
                       params: BnbParams | None = None, cache_dir=None, check: bool = False,
                       workers: int = 1) -> dict:
    """Held-out perplexity trace of the topic model on a synthetic corpus."""
    corpus, _, _ = gen_topic_corpus(D=D, W=W, n_topics=n_topics, seed=seed)
    train, test = split_words(corpus, test_frac, seed=seed)
    model = BnbTopicModel(train, params or BnbParams(), cache_dir=cache_dir)
    model.zero_set()
    sampler = SliceSampler(model, delta_xi=delta_xi, rw=RwConfig(10, 0.3), seed=seed,
                           workers=workers, check=check)
    tracker = PerplexityTracker(test)
    values = []

    def record(s, rec):
        values.append(tracker.add(*s.model.current_predictive()))

    trace = sampler.run(iterations, callback=record)
    sampler.close()
    return {"perplexity": np.array(values), "trace": trace, "W": W}


def window_medians(values, window: int = 100) -> np.ndarray:
    values = np.asarray(values)
    n = len(values) // window
    return np.array([np.median(values[i * window:(i + 1) * window]) for i in range(n)])
