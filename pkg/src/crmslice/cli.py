"""Command-line experiment runner.

Subcommands::

    crmslice run --config run.ini [--model ...] [--iters ...] [--out DIR]
    crmslice gen-bb --n 500 --out DIR
    crmslice gen-corpus --out corpus.txt

Configuration files use INI syntax with a single ``[run]`` section whose keys
match :class:`RunConfig` fields. Command-line flags override file values.
"""
from __future__ import annotations

import argparse
import configparser
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

from .data import (SyntheticSpec, gen_bb_synthetic, gen_topic_corpus, load_bow_corpus,
                   read_matrix_csv, save_bb_dataset, save_bow_corpus, split_words)
from .diagnostics import Trace, heldout_l2, write_summary_csv
from .engine import SliceSampler
from .errors import ConfigError
from .experiments import active_features
from .kernels import RwConfig
from .models.bb import BbParams, BetaBernoulliModel
from .models.bnb import BnbParams, BnbTopicModel, PerplexityTracker
from .truncated import TruncatedSampler

MODELS = ("beta-bernoulli", "bnb-topic")
SAMPLERS = ("slice", "truncated")
# slice scales: tuned on simulated data for the beta-Bernoulli held-out regime,
# and the value used for topic models
DEFAULT_DELTA_XI = {"beta-bernoulli": 2.0, "bnb-topic": 3.0}


@dataclass
class RunConfig:
    model: str = "beta-bernoulli"
    sampler: str = "slice"
    iterations: int = 1000
    seed: int = 0
    workers: int = 1
    out: str = "run-out"
    burn_in: int = -1
    thin: int = 10
    # 0 selects the model default (DEFAULT_DELTA_XI)
    delta_xi: float = 0.0
    n_gamma: int = 10
    delta_v: float = 0.3
    hastings: bool = True
    K_fixed: int = 0
    table_cache: str = ""
    check_invariants: bool = False
    # beta-Bernoulli
    sigma: float = 0.5
    sigma0: float = 0.5
    c: float = 2.0
    zero_set_form: str = "exact"
    data: str = "synthetic"
    n_train: int = 300
    n_test: int = 200
    # 0 selects the 2 ceil(log N) default
    synth_k_true: int = 20
    synth_dim: int = 0
    heldout_method: str = "auto"
    # topic model
    alpha: float = 1.0
    lam: float = 1.1
    beta: float = 0.1
    r: str = "auto"
    corpus: str = "synthetic"
    min_count: int = -1
    test_frac: float = 0.3
    synth_docs: int = 20
    synth_vocab: int = 50
    synth_topics: int = 5

    def validate(self) -> "RunConfig":
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"sampler must be one of {SAMPLERS}")
        if self.sampler == "truncated" and self.K_fixed < 1:
            raise ConfigError("the truncated sampler needs K_fixed >= 1")
        if self.sampler == "slice" and self.K_fixed:
            raise ConfigError("K_fixed applies only to the truncated sampler")
        if self.iterations < 0 or self.workers < 1 or self.thin < 1:
            raise ConfigError("iterations >= 0, workers >= 1 and thin >= 1 are required")
        if self.delta_xi < 0:
            raise ConfigError("delta_xi must be positive (or 0 for the model default)")
        if self.r != "auto":
            try:
                float(self.r)
            except ValueError:
                raise ConfigError("r must be 'auto' or a positive number") from None
        RwConfig(self.n_gamma, self.delta_v, self.hastings)
        return self

    @property
    def resolved_delta_xi(self) -> float:
        return self.delta_xi or DEFAULT_DELTA_XI[self.model]

    @property
    def resolved_burn_in(self) -> int:
        return self.iterations // 2 if self.burn_in < 0 else min(self.burn_in, self.iterations)

    def to_ini(self, path) -> None:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["run"] = {f.name: str(getattr(self, f.name)) for f in fields(self)}
        with open(path, "w") as fh:
            cp.write(fh)


_TYPES = {"int": int, "float": float, "str": str, "bool": bool}


def _coerce(field_type, raw: str):
    t = _TYPES[field_type] if isinstance(field_type, str) else field_type
    if t is bool:
        low = str(raw).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    try:
        return t(raw)
    except ValueError:
        raise ConfigError(f"cannot read {raw!r} as {t.__name__}") from None


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path}")
        if "run" not in cp:
            raise ConfigError("config file needs a [run] section")
        values.update(cp["run"])
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    types = {f.name: f.type for f in fields(RunConfig)}
    unknown = set(values) - set(types)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kw = {k: _coerce(types[k], v) for k, v in values.items()}
    return RunConfig(**kw).validate()


# ---------------------------------------------------------------------------


def _build_bb(cfg: RunConfig):
    params = BbParams(cfg.sigma, cfg.sigma0, cfg.c)
    if cfg.data == "synthetic":
        spec = SyntheticSpec(N=cfg.n_train + cfg.n_test, K_true=cfg.synth_k_true or None,
                             D=cfg.synth_dim or None, sigma=cfg.sigma, sigma0=cfg.sigma0,
                             c=cfg.c, seed=cfg.seed)
        Y, _, _ = gen_bb_synthetic(spec)
    else:
        Y = read_matrix_csv(cfg.data)
    if cfg.n_train + cfg.n_test > len(Y):
        raise ConfigError(f"data has {len(Y)} rows, fewer than n_train + n_test")
    Ytr, Yte = Y[:cfg.n_train], Y[cfg.n_train:cfg.n_train + cfg.n_test]
    model = BetaBernoulliModel(Ytr, params, zero_set_form=cfg.zero_set_form,
                               cache_dir=cfg.table_cache or None)
    return model, Yte


def _build_bnb(cfg: RunConfig):
    if cfg.corpus == "synthetic":
        corpus, _, _ = gen_topic_corpus(D=cfg.synth_docs, W=cfg.synth_vocab,
                                        n_topics=cfg.synth_topics, seed=cfg.seed)
    else:
        corpus = load_bow_corpus(cfg.corpus, None if cfg.min_count < 0 else cfg.min_count)
    train, test = split_words(corpus, cfg.test_frac, seed=cfg.seed)
    r = None if cfg.r == "auto" else float(cfg.r)
    params = BnbParams(alpha=cfg.alpha, lam=cfg.lam, beta=cfg.beta, r=r)
    model = BnbTopicModel(train, params, cache_dir=cfg.table_cache or None)
    return model, test


def run(cfg: RunConfig) -> dict:
    """Run one chain and write ``trace.csv``, ``timing.csv``, ``summary.csv`` and ``config.ini``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.to_ini(out / "config.ini")
    if cfg.model == "beta-bernoulli":
        model, heldout = _build_bb(cfg)
    else:
        model, heldout = _build_bnb(cfg)
    t0 = time.perf_counter()
    if cfg.sampler == "slice" and model.n_units:
        model.zero_set()
    table_seconds = time.perf_counter() - t0
    rw = RwConfig(cfg.n_gamma, cfg.delta_v, cfg.hastings)
    if cfg.sampler == "slice":
        sampler = SliceSampler(model, delta_xi=cfg.resolved_delta_xi, rw=rw, seed=cfg.seed,
                               workers=cfg.workers, check=cfg.check_invariants)
    else:
        sampler = TruncatedSampler(model, cfg.K_fixed, rw=rw, seed=cfg.seed, workers=cfg.workers,
                                   check=cfg.check_invariants)
    burn = cfg.resolved_burn_in
    trace = Trace()
    psi_samples = []
    tracker = None
    if cfg.model == "bnb-topic" and heldout.n_tokens:
        tracker = PerplexityTracker(heldout)

    def record(s, rec):
        if tracker is not None:
            rec.extra["perplexity"] = tracker.add(*s.model.current_predictive())
        if cfg.model == "beta-bernoulli" and rec.iteration > burn \
                and (rec.iteration - burn) % cfg.thin == 0:
            psi_samples.append(active_features(s.model))
        trace.append(rec)

    sampler.run(cfg.iterations, callback=record)
    sampler.close()

    warnings = []
    summary = {"model": cfg.model, "sampler": cfg.sampler, "N": model.n_units,
               "iterations": cfg.iterations,
               "delta_xi": cfg.resolved_delta_xi if cfg.sampler == "slice" else ""}
    stats = trace.summary(burn_in=burn)
    if len(trace) - burn < 100:
        warnings.append("fewer than 100 post-burn-in iterations; ESS not computed")
    summary.update(stats)
    summary["table_seconds"] = table_seconds
    summary["ess_excludes_table_time"] = 1
    if cfg.model == "beta-bernoulli":
        if len(heldout) and psi_samples:
            summary["heldout_l2"] = heldout_l2(heldout, psi_samples, method=cfg.heldout_method)
        else:
            summary["heldout_l2"] = float("nan")
            warnings.append("no held-out rows or no retained samples")
    else:
        summary["perplexity"] = tracker.value() if tracker is not None else float("nan")
        if tracker is None:
            warnings.append("empty test split")
    summary["warnings"] = "; ".join(warnings)
    trace.write_csv(out / "trace.csv")
    trace.write_timing_csv(out / "timing.csv")
    write_summary_csv([summary], out / "summary.csv")
    return summary


# ---------------------------------------------------------------------------

_FLAG_KEYS = ("model", "sampler", "seed", "out", "workers", "delta_xi", "n_gamma", "delta_v",
              "K_fixed", "sigma", "sigma0", "c", "alpha", "lam", "beta", "r", "data", "corpus",
              "n_train", "n_test", "burn_in", "thin", "table_cache", "test_frac", "min_count")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crmslice", description="CRM slice sampler experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one chain")
    r.add_argument("--config")
    r.add_argument("--iters", dest="iterations")
    r.add_argument("--check-invariants", dest="check_invariants", action="store_const",
                   const="true")
    r.add_argument("--no-hastings", dest="hastings", action="store_const", const="false")
    for key in _FLAG_KEYS:
        names = ["--" + key.replace("_", "-").lower()]
        if key == "K_fixed":
            names.append("--K")
        r.add_argument(*names, dest=key)

    g = sub.add_parser("gen-bb", help="write a synthetic beta-Bernoulli data set")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--k-true", type=int)
    g.add_argument("--dim", type=int)
    g.add_argument("--sigma", type=float, default=0.2)
    g.add_argument("--sigma0", type=float, default=0.5)
    g.add_argument("--c", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    t = sub.add_parser("gen-corpus", help="write a synthetic bag-of-words corpus")
    t.add_argument("--docs", type=int, default=20)
    t.add_argument("--vocab", type=int, default=50)
    t.add_argument("--topics", type=int, default=5)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            overrides = {k: v for k, v in vars(args).items()
                         if k not in ("command", "config") and v is not None}
            summary = run(load_config(args.config, overrides))
            print(", ".join(f"{k}={v}" for k, v in summary.items() if k != "warnings"))
            if summary.get("warnings"):
                print("warning: " + summary["warnings"], file=sys.stderr)
        elif args.command == "gen-bb":
            spec = SyntheticSpec(N=args.n, K_true=args.k_true, D=args.dim, sigma=args.sigma,
                                 sigma0=args.sigma0, c=args.c, seed=args.seed)
            save_bb_dataset(args.out, *gen_bb_synthetic(spec))
        elif args.command == "gen-corpus":
            corpus, _, _ = gen_topic_corpus(D=args.docs, W=args.vocab, n_topics=args.topics,
                                            seed=args.seed)
            save_bow_corpus(corpus, args.out)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
