"""Joint-distribution ("getting it right") checks for the samplers.

Two simulators of the joint law of parameters and data are compared:

* marginal-conditional: independent ancestral draws from the prior and
  likelihood;
* successive-conditional: chains that alternate one sampler sweep with a
  fresh draw of the data given the parameters.

Each chain starts from an exact ancestral draw, so every successive state is
marginally distributed as the joint law when the sweep is invariant. The
z-score of each statistic uses the spread of per-chain means, which accounts
for autocorrelation within chains.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import SliceSampler
from .kernels import RwConfig
from .models.bb import BbParams, BetaBernoulliModel, simulate_prior as bb_prior
from .truncated import TruncatedSampler
from .zeroset import bb_integrand, build_table

BB_STATS = ("sum_x", "k_prev", "parity", "sum_theta_active")


@dataclass
class GewekeResult:
    names: tuple
    prior_mean: np.ndarray
    chain_mean: np.ndarray
    z: np.ndarray
    n_prior: int
    n_chain: int

    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z)))

    def passed(self, bound: float = 5.0) -> bool:
        return self.max_abs_z() < bound

    def rows(self):
        for i, name in enumerate(self.names):
            yield name, float(self.prior_mean[i]), float(self.chain_mean[i]), float(self.z[i])


def compare(prior_stats, chain_stats, names) -> GewekeResult:
    """``prior_stats`` is (M, S); ``chain_stats`` is (C, T, S)."""
    prior_stats = np.asarray(prior_stats, dtype=float)
    chain_stats = np.asarray(chain_stats, dtype=float)
    M = len(prior_stats)
    C = chain_stats.shape[0]
    pm = prior_stats.mean(axis=0)
    per_chain = chain_stats.mean(axis=1)
    cm = per_chain.mean(axis=0)
    se = np.sqrt(prior_stats.var(axis=0, ddof=1) / M + per_chain.var(axis=0, ddof=1) / C)
    diff = cm - pm
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / se, np.where(diff == 0, 0.0, np.inf))
    return GewekeResult(tuple(names), pm, cm, z, M, C * chain_stats.shape[1])


def bb_statistics(X, gammas, c) -> np.ndarray:
    X = np.asarray(X)
    active = np.nonzero(X.any(axis=0))[0]
    k_prev = active[-1] + 1 if len(active) else 0
    theta = np.exp(-np.asarray(gammas)[active] / c)
    return np.array([X.sum(), k_prev, float(np.count_nonzero(X) % 2 == 0), theta.sum()])


def _bb_truncated_prior(n_obs, dim, params, K, rng):
    gammas = np.cumsum(rng.exponential(size=K))
    X = (rng.random((n_obs, K)) < np.exp(-gammas / params.c)).astype(np.int8)
    psi = params.sigma0 * rng.standard_normal((K, dim))
    Y = X @ psi + params.sigma * rng.standard_normal((n_obs, dim))
    return gammas, X, psi, Y


def bb_geweke(n_obs: int = 4, dim: int = 2, params: BbParams = BbParams(0.5, 1.0, 1.0),
              delta_xi: float = 1.0, chains: int = 100, sweeps: int = 500,
              n_prior: int = 50_000, seed=0, K_fixed: int | None = None,
              rw: RwConfig | None = None, zero_set_form: str = "exact") -> GewekeResult:
    """Geweke comparison for the beta-Bernoulli model.

    With ``K_fixed`` set, the fixed-truncation sampler is checked against the
    finite model instead of the slice sampler against the infinite one.
    """
    ss = np.random.SeedSequence(seed)
    prior_ss, chain_ss = ss.spawn(2)
    rng = np.random.default_rng(prior_ss)

    def draw(r):
        if K_fixed is None:
            return bb_prior(n_obs, dim, params, r)
        return _bb_truncated_prior(n_obs, dim, params, K_fixed, r)

    prior = np.array([bb_statistics(d[1], d[0], params.c) for d in (draw(rng) for _ in range(n_prior))])
    table = build_table(bb_integrand(n_obs, zero_set_form), params.c) if K_fixed is None else None
    out = np.empty((chains, sweeps, len(BB_STATS)))
    for ci, css in enumerate(chain_ss.spawn(chains)):
        init_ss, run_ss = css.spawn(2)
        gammas, X, psi, Y = draw(np.random.default_rng(init_ss))
        model = BetaBernoulliModel(Y, params, zero_set_form=zero_set_form, table=table)
        if K_fixed is None:
            sampler = SliceSampler(model, delta_xi=delta_xi, rw=rw, seed=run_ss, check=True)
        else:
            sampler = TruncatedSampler(model, K_fixed, rw=rw, seed=run_ss, check=True)
        model.set_state(X, psi)
        sampler.set_atoms(gammas, np.ones(len(gammas)))
        for t in range(sweeps):
            sampler.sweep()
            model.resample_data(sampler.rng)
            out[ci, t] = bb_statistics(model.count_matrix(), sampler.state.gammas, params.c)
    return compare(prior, out, BB_STATS)


BNB_STATS = ("k_prev", "parity", "n_active", "sum_tau_active", "x_11", "theta_11",
             "pi_11_odds", "n_topic1_word1")


def bnb_statistics(X, Z, words, gammas, marks, theta, pi, c) -> np.ndarray:
    X = np.asarray(X)
    K = X.shape[1]
    active = np.nonzero(X.any(axis=0))[0]
    k_prev = active[-1] + 1 if len(active) else 0
    tau = np.asarray(marks)[active] * np.exp(-np.asarray(gammas)[active] / c)
    first = K > 0 and X[:, 0].any()
    x11 = X[0, 0] if K else 0
    th = theta[0, 0] if first else 0.0
    p = pi[0, 0] / (1.0 + pi[0, 0]) if first else 0.0
    w1 = np.count_nonzero((np.asarray(Z) == 1) & (np.asarray(words) == 0))
    return np.array([k_prev, float(np.count_nonzero(X) % 2 == 0), len(active), tau.sum(),
                     x11, th, p, w1])


def bnb_geweke(D: int = 2, W: int = 3, params=None, r: float = 1.0, max_len: int = 10,
               delta_xi: float = 1.0, chains: int = 1000, sweeps: int = 50,
               n_prior: int = 50_000, seed=0, K_fixed: int | None = None,
               rw: RwConfig | None = None) -> GewekeResult:
    """Geweke comparison for the topic model.

    Document lengths never change under the sampler, so the comparison is
    made under the joint law conditioned on ``N_d <= max_len`` and uses many
    short chains, each with its own lengths drawn from that law.
    """
    from .models.bnb import BnbParams, BnbTopicModel, simulate_prior as bnb_prior
    from .zeroset import bnb_integrand

    params = params or BnbParams(alpha=1.0, lam=1.1, beta=0.1, r=r)
    c = params.c
    ss = np.random.SeedSequence(seed)
    prior_ss, chain_ss = ss.spawn(2)
    rng = np.random.default_rng(prior_ss)

    def draw(rr):
        if K_fixed is None:
            return bnb_prior(D, W, params, r, rr, max_len=max_len)
        return _bnb_truncated_prior(D, W, params, r, K_fixed, max_len, rr)

    def stats_of(d):
        doc, words = d.corpus.flat()
        return bnb_statistics(d.X, d.Z, words, d.gammas, d.marks, d.theta, d.pi, c)

    prior = np.array([stats_of(draw(rng)) for _ in range(n_prior)])
    r_vec = np.full(D, float(r))
    table = build_table(bnb_integrand(r_vec, params.alpha, params.lam), c) if K_fixed is None else None
    out = np.empty((chains, sweeps, len(BNB_STATS)))
    for ci, css in enumerate(chain_ss.spawn(chains)):
        init_ss, run_ss = css.spawn(2)
        d = draw(np.random.default_rng(init_ss))
        model = BnbTopicModel(d.corpus, params, table=table)
        if K_fixed is None:
            sampler = SliceSampler(model, delta_xi=delta_xi, rw=rw, seed=run_ss, check=True)
        else:
            sampler = TruncatedSampler(model, K_fixed, rw=rw, seed=run_ss, check=True)
        model.set_state(d.Z, d.psi, d.theta, d.pi)
        model.resize(len(d.gammas))
        sampler.set_atoms(d.gammas, d.marks)
        for t in range(sweeps):
            sampler.sweep()
            model.resample_data(sampler.rng)
            st = sampler.state
            out[ci, t] = bnb_statistics(model.count_matrix(), model.Z, model.words, st.gammas,
                                        st.marks, model.theta, model.pi, c)
    return compare(prior, out, BNB_STATS)


def _bnb_truncated_prior(D, W, params, r, K, max_len, rng, max_tries: int = 100_000):
    from .crm import BondessonBetaRep
    from .models.bnb import BnbPriorDraw, Corpus, beta_params

    rep = BondessonBetaRep(params.alpha, params.lam)
    beta = np.broadcast_to(np.asarray(params.beta, dtype=float), (W,))
    for _ in range(max_tries):
        gammas = np.cumsum(rng.exponential(size=K))
        marks = rep.sample_mark(rng, size=K)
        a, b = beta_params(marks, gammas, params.alpha, params.lam)
        theta = np.minimum(rng.beta(a, b, size=(D, K)), 1.0 - 1e-300)
        with np.errstate(divide="ignore"):
            pi = rng.gamma(r, theta / (1.0 - theta))
        X = rng.poisson(np.minimum(pi, 1e15))
        if np.any(X.sum(axis=1) > max_len):
            continue
        psi = rng.dirichlet(beta, size=K)
        docs, Z = [], []
        for dd in range(D):
            z = np.repeat(np.arange(1, K + 1), X[dd])
            cdf = np.cumsum(psi[z - 1], axis=1)
            u = rng.random(len(z))[:, None] * cdf[:, -1:] if len(z) else np.zeros((0, 1))
            docs.append(np.minimum((cdf < u).sum(axis=1), W - 1))
            Z.append(z)
        return BnbPriorDraw(gammas, marks, theta, pi, X, np.concatenate(Z).astype(np.int64),
                            psi, Corpus(docs, W))
    raise RuntimeError("could not draw a corpus within the length cap")
