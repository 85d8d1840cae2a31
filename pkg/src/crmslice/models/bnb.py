"""Beta-negative-binomial topic model.

Atoms ``(V_k, Gamma_k)`` follow the Bondesson beta-process series. For each
document ``d`` and topic ``k``::

    theta_dk ~ Beta(a_k, b_k),  a_k = alpha lam V_k e^{-Gamma_k / c},
                                b_k = lam (1 - alpha V_k e^{-Gamma_k / c})
    pi_dk    ~ Gamma(r_d, rate (1 - theta_dk) / theta_dk)
    X_dk     ~ Poisson(pi_dk)

and the ``X_dk`` tokens of document ``d`` assigned to topic ``k`` draw words
from ``psi_k ~ Dirichlet(beta)``. Every token is a slice unit whose active
index is its topic ``Z_dn``.

The arrival and mark updates integrate out ``(theta, pi)``; the pair is then
redrawn from its conditional given the counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, gammaln

from ..crm import BondessonBetaRep
from ..errors import InvariantViolation
from ..zeroset import bnb_integrand, bnb_log_zero_prob, build_table, cached_table


@dataclass
class Corpus:
    """Documents as arrays of 0-based word ids over a vocabulary of size ``W``."""

    docs: list
    W: int

    def __post_init__(self):
        self.docs = [np.asarray(d, dtype=np.int64) for d in self.docs]
        for d in self.docs:
            if d.size and (d.min() < 0 or d.max() >= self.W):
                raise ValueError("word id outside the vocabulary")

    @property
    def D(self) -> int:
        return len(self.docs)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([len(d) for d in self.docs], dtype=np.int64)

    @property
    def n_tokens(self) -> int:
        return int(self.lengths.sum())

    def flat(self):
        """Per-token (document index, word id) arrays."""
        doc = np.repeat(np.arange(self.D), self.lengths)
        words = np.concatenate(self.docs) if self.D else np.zeros(0, dtype=np.int64)
        return doc, words.astype(np.int64)


@dataclass(frozen=True)
class BnbParams:
    alpha: float = 1.0
    lam: float = 1.1
    beta: float = 0.1
    # None derives r_d = N_d (lam - 1) / (alpha lam) from the document lengths
    r: object = None
    # floor on auto-derived r_d, in units of one token
    r_min_tokens: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.lam <= 1:
            raise ValueError("lam must exceed 1")
        if np.any(np.asarray(self.beta) <= 0):
            raise ValueError("beta must be positive")

    @property
    def c(self) -> float:
        return self.lam * self.alpha

    def resolve_r(self, lengths) -> np.ndarray:
        lengths = np.asarray(lengths, dtype=float)
        if self.r is None:
            n = np.maximum(lengths, self.r_min_tokens)
            return n * (self.lam - 1.0) / (self.alpha * self.lam)
        r = np.broadcast_to(np.asarray(self.r, dtype=float), lengths.shape).copy()
        if np.any(r <= 0):
            raise ValueError("r must be positive")
        return r


def beta_params(v, gamma, alpha, lam):
    """``(a, b)`` of the per-document beta prior on ``theta_dk``."""
    s = alpha * np.asarray(v) * np.exp(-np.asarray(gamma) / (alpha * lam))
    a, b = lam * s, lam * (1.0 - s)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("beta parameters must be positive (alpha * v * exp(-gamma / c) < 1)")
    return a, b


def bnb_logpmf(x, r, a, b):
    """Beta-negative-binomial log pmf."""
    x = np.asarray(x, dtype=float)
    return (gammaln(r + x) - gammaln(x + 1.0) - gammaln(r)
            + betaln(a + x, b + r) - betaln(a, b))


def _bnb_atom_loglik(x, r, a, b):
    # the terms of the log pmf that depend on (a, b)
    zero = x == 0
    out = np.sum(bnb_log_zero_prob(a, b, r[zero]))
    if not zero.all():
        xs = x[~zero]
        out += np.sum(betaln(a + xs, b + r[~zero]) - betaln(a, b))
    return float(out)


def vgamma_logtarget_sub1(v, gamma, counts, params: BnbParams, r, lower, upper) -> float:
    """Unnormalized log conditional of an occupied (mark, arrival) pair."""
    if not (lower <= gamma <= upper and 0.0 < v < 1.0):
        return -math.inf
    a, b = beta_params(v, gamma, params.alpha, params.lam)
    return (_bnb_atom_loglik(np.asarray(counts), np.asarray(r, dtype=float), a, b)
            + (params.lam - 2.0) * math.log1p(-v) + math.log(params.lam - 1.0))


def vgamma_logtarget_sub2(v, gamma, counts, params: BnbParams, r, lower, table) -> float:
    """Unnormalized log conditional of the last occupied pair (``table=None`` means no zero-set term)."""
    if not (gamma >= lower and 0.0 < v < 1.0):
        return -math.inf
    out = vgamma_logtarget_sub1(v, gamma, counts, params, r, lower, math.inf)
    out -= gamma - lower
    if table is not None:
        out -= table.value(gamma)
    return out


def z_probabilities(pi_row, psi_col, level: int, delta_xi: float, use_slice: bool = True):
    """Normalized topic probabilities for one token (reference implementation)."""
    pi_row = np.asarray(pi_row, dtype=float)
    k = np.arange(1, len(pi_row) + 1)
    w = pi_row * np.asarray(psi_col, dtype=float)
    if use_slice:
        w = w * np.where(k <= level, np.exp(k / delta_xi), 0.0)
    total = w.sum()
    if not total > 0:
        raise InvariantViolation("every topic has zero weight")
    return w / total


def sample_topics(word_topic_counts, beta, rng) -> np.ndarray:
    """Draw topic-word distributions from their Dirichlet full conditionals."""
    shape = np.asarray(word_topic_counts, dtype=float) + np.asarray(beta, dtype=float)
    g = rng.standard_gamma(shape)
    total = g.sum(axis=1, keepdims=True)
    bad = total[:, 0] <= 0
    if np.any(bad):
        # all-underflow rows: fall back to the largest-shape word
        g[bad, np.argmax(shape[bad], axis=1)] = 1.0
        total = g.sum(axis=1, keepdims=True)
    return g / total


def sample_theta_pi(counts, v, gamma, params: BnbParams, r, rng):
    """Conjugate draws of ``(theta, pi)`` for counts ``X`` (D x K) given atoms.

    ``theta ~ Beta(a + X, b + r)`` with ``pi`` integrated out, then
    ``pi ~ Gamma(r + X, scale=theta)``.
    """
    X = np.asarray(counts, dtype=float)
    a, b = beta_params(v, gamma, params.alpha, params.lam)
    r = np.asarray(r, dtype=float)[:, None]
    theta = rng.beta(a[None, :] + X, b[None, :] + r)
    pi = rng.gamma(r + X, np.maximum(theta, 0.0))
    return theta, pi


def perplexity(test: Corpus, samples) -> float:
    """Held-out perplexity from ``(pi, psi)`` posterior samples.

    The per-token predictive is averaged over samples before taking logs.
    """
    doc, words = test.flat()
    if len(words) == 0:
        raise ValueError("the test split has no tokens")
    acc = None
    count = 0
    for pi, psi in samples:
        p = token_predictive(doc, words, pi, psi)
        acc = p if acc is None else acc + p
        count += 1
    if count == 0:
        raise ValueError("at least one posterior sample is required")
    return float(np.exp(-np.mean(np.log(acc / count))))


def token_predictive(doc, words, pi, psi) -> np.ndarray:
    """``sum_k pi_dk / sum_j pi_dj * psi_kw`` for every (doc, word) token."""
    pi = np.asarray(pi, dtype=float)
    total = pi.sum(axis=1, keepdims=True)
    K = pi.shape[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        mix = np.where(total > 0, pi / total, 1.0 / max(K, 1))
    return np.einsum("tk,kt->t", mix[doc], np.asarray(psi)[:, words])


class PerplexityTracker:
    """Running-mean predictive on a fixed test split."""

    def __init__(self, test: Corpus):
        self.doc, self.words = test.flat()
        self.acc = np.zeros(len(self.words))
        self.count = 0

    def add(self, pi, psi) -> float:
        self.acc += token_predictive(self.doc, self.words, pi, psi)
        self.count += 1
        return self.value()

    def value(self) -> float:
        if self.count == 0 or len(self.words) == 0:
            return float("nan")
        return float(np.exp(-np.mean(np.log(self.acc / self.count))))


class BnbTopicModel:
    """Model plugin for the slice and fixed-truncation samplers.

    Tokens start in topic 1.
    """

    def __init__(self, corpus: Corpus, params: BnbParams = BnbParams(), cache_dir=None,
                 table_points: int = 1000, table=None):
        self.corpus = corpus
        self.params = params
        self.rep = BondessonBetaRep(alpha=params.alpha, lam=params.lam)
        self.D, self.W = corpus.D, corpus.W
        self.doc, self.words = corpus.flat()
        self.r = params.resolve_r(corpus.lengths)
        self.beta = np.broadcast_to(np.asarray(params.beta, dtype=float), (self.W,)).copy()
        self.cache_dir = cache_dir
        self.table_points = table_points
        self._table = table
        self.K = 0
        self._alloc(8)
        self.Z = np.ones(len(self.words), dtype=np.int64)
        self.resize(1 if len(self.words) else 0)
        self._recount()

    def _alloc(self, cap):
        self.X = np.zeros((self.D, cap), dtype=np.int64)
        self.nkw = np.zeros((cap, self.W), dtype=np.int64)
        self.psi = np.zeros((cap, self.W))
        self.theta = np.zeros((self.D, cap))
        self.pi = np.zeros((self.D, cap))

    @property
    def n_units(self) -> int:
        return len(self.words)

    def active_index(self):
        return self.Z

    def count_matrix(self):
        return self.X[:, :self.K]

    def resize(self, K: int) -> None:
        cap = self.X.shape[1]
        if K > cap:
            old = (self.X, self.nkw, self.psi, self.theta, self.pi)
            self._alloc(max(K, 2 * cap))
            self.X[:, :cap], self.nkw[:cap], self.psi[:cap] = old[0], old[1], old[2]
            self.theta[:, :cap], self.pi[:, :cap] = old[3], old[4]
        if K < self.K:
            if self.n_units and self.Z.max() > K:
                raise InvariantViolation("shrinking would drop assigned topics")
            self.psi[K:self.K] = 0.0
            self.theta[:, K:self.K] = 0.0
            self.pi[:, K:self.K] = 0.0
        self.K = K

    def _recount(self):
        cap = self.X.shape[1]
        z0 = self.Z - 1
        self.X[:] = np.bincount(self.doc * cap + z0, minlength=self.D * cap).reshape(self.D, cap)
        self.nkw[:] = np.bincount(z0 * self.W + self.words,
                                  minlength=cap * self.W).reshape(cap, self.W)

    def set_state(self, Z, psi, theta=None, pi=None) -> None:
        Z = np.asarray(Z, dtype=np.int64)
        K = int(Z.max()) if len(Z) else 0
        K = max(K, psi.shape[0])
        self._alloc(max(8, K))
        self.K = K
        self.Z = Z.copy()
        self.psi[:psi.shape[0]] = psi
        if theta is not None:
            self.theta[:, :theta.shape[1]] = theta
            self.pi[:, :pi.shape[1]] = pi
        self._recount()

    def sample_traits(self, K: int, rng) -> None:
        self.psi[:K] = sample_topics(self.nkw[:K], self.beta, rng)

    def atom_loglik(self, k: int, v: float, gamma: float) -> float:
        a, b = beta_params(v, gamma, self.params.alpha, self.params.lam)
        return _bnb_atom_loglik(self.X[:, k - 1], self.r, a, b)

    def tail_mark_logaccept(self, v: float, gamma: float) -> float:
        a, b = beta_params(v, gamma, self.params.alpha, self.params.lam)
        return float(np.sum(bnb_log_zero_prob(a, b, self.r)))

    def zero_set(self):
        if self._table is None:
            p = self.params
            self._table = cached_table(
                lambda: build_table(bnb_integrand(self.r, p.alpha, p.lam), p.c,
                                    n_points=self.table_points),
                cache_dir=self.cache_dir, model="bnb", r=sorted(np.round(self.r, 12).tolist()),
                alpha=p.alpha, lam=p.lam, n_points=self.table_points)
        return self._table

    def update_rates(self, gammas, marks, rng) -> None:
        K = self.K
        self.theta[:, :K], self.pi[:, :K] = sample_theta_pi(
            self.X[:, :K], marks[:K], gammas[:K], self.params, self.r, rng)

    def uniforms_per_unit(self, K: int) -> int:
        return 1

    def sample_assignments(self, levels, gammas, marks, uniforms, delta_xi, use_slice, executor):
        K = self.K
        if self.n_units == 0:
            return
        with np.errstate(divide="ignore"):
            log_pi = np.log(self.pi[:, :K])
            log_psi = np.log(self.psi[:K])
        k = np.arange(1, K + 1)

        def work(rows):
            logw = log_pi[self.doc[rows]] + log_psi[:, self.words[rows]].T
            if use_slice:
                logw += np.where(k[None, :] <= levels[rows, None], k / delta_xi, -np.inf)
            top = logw.max(axis=1, keepdims=True)
            if not np.all(np.isfinite(top)):
                raise InvariantViolation("a token has no admissible topic")
            cdf = np.cumsum(np.exp(logw - top), axis=1)
            u = uniforms[rows, 0] * cdf[:, -1]
            self.Z[rows] = 1 + np.minimum((cdf < u[:, None]).sum(axis=1), K - 1)

        executor.run(work, self.n_units)
        self._recount()

    def update_local_truncation(self) -> None:
        # each token activates exactly its own topic
        return None

    def resample_data(self, rng) -> None:
        """Redraw every token's word given its topic (used by joint-distribution tests)."""
        cdf = np.cumsum(self.psi[self.Z - 1], axis=1)
        u = rng.random(self.n_units) * cdf[:, -1]
        self.words = np.minimum((cdf < u[:, None]).sum(axis=1), self.W - 1).astype(np.int64)
        self._recount()

    def current_predictive(self):
        return self.pi[:, :self.K], self.psi[:self.K]

    def check_invariants(self) -> None:
        K = self.K
        if self.n_units and (self.Z.min() < 1 or self.Z.max() > K):
            raise InvariantViolation("topic indicator outside 1..K")
        cap = self.X.shape[1]
        X = np.bincount(self.doc * cap + self.Z - 1, minlength=self.D * cap).reshape(self.D, cap)
        if not np.array_equal(X, self.X):
            raise InvariantViolation("document-topic counts disagree with the indicators")
        nkw = np.bincount((self.Z - 1) * self.W + self.words, minlength=cap * self.W)
        if not np.array_equal(nkw.reshape(cap, self.W), self.nkw):
            raise InvariantViolation("topic-word counts disagree with the indicators")
        th = self.theta[:, :K]
        if np.any(th < 0) or np.any(th > 1) or np.any(self.pi[:, :K] < 0):
            raise InvariantViolation("rates out of range")


@dataclass
class BnbPriorDraw:
    gammas: np.ndarray
    marks: np.ndarray
    theta: np.ndarray
    pi: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    psi: np.ndarray
    corpus: Corpus = field(repr=False)


def simulate_prior(D: int, W: int, params: BnbParams, r, rng, max_len: int | None = None,
                   tol: float = 1e-10, max_tries: int = 100_000) -> BnbPriorDraw:
    """Ancestral draw of atoms, rates, counts, topics and a corpus.

    Draws whose document lengths exceed ``max_len`` are rejected, giving a
    draw from the joint law conditioned on ``N_d <= max_len``. Atoms are
    generated until the expected number of tokens in later topics is below
    ``tol``, then cut at the last used topic.
    """
    r = np.broadcast_to(np.asarray(r, dtype=float), (D,))
    rep = BondessonBetaRep(params.alpha, params.lam)
    c = params.c
    scale = r.sum() * params.alpha * params.lam / (params.lam - 1.0) * c
    g_stop = c * math.log(max(scale / tol, 1.0))
    beta = np.broadcast_to(np.asarray(params.beta, dtype=float), (W,))
    for _ in range(max_tries):
        gammas = []
        g = 0.0
        while True:
            g += rng.exponential()
            if g > g_stop:
                break
            gammas.append(g)
        gammas = np.array(gammas)
        marks = rep.sample_mark(rng, size=len(gammas))
        a, b = beta_params(marks, gammas, params.alpha, params.lam)
        theta = rng.beta(a[None, :], b[None, :], size=(D, len(gammas)))
        theta = np.minimum(theta, 1.0 - 1e-300)
        with np.errstate(divide="ignore"):
            pi = rng.gamma(np.broadcast_to(r[:, None], theta.shape), theta / (1.0 - theta))
        X = rng.poisson(np.minimum(pi, 1e15))
        if max_len is not None and np.any(X.sum(axis=1) > max_len):
            continue
        used = np.nonzero(X.any(axis=0))[0]
        K = used[-1] + 1 if len(used) else 0
        gammas, marks, theta, pi, X = gammas[:K], marks[:K], theta[:, :K], pi[:, :K], X[:, :K]
        psi = rng.dirichlet(beta, size=K) if K else np.zeros((0, W))
        docs, Z = [], []
        for d in range(D):
            z = np.repeat(np.arange(1, K + 1), X[d])
            cdf = np.cumsum(psi[z - 1], axis=1)
            u = rng.random(len(z))[:, None] * cdf[:, -1:] if len(z) else np.zeros((0, 1))
            docs.append(np.minimum((cdf < u).sum(axis=1), W - 1))
            Z.append(z)
        Z = np.concatenate(Z) if Z else np.zeros(0, dtype=np.int64)
        return BnbPriorDraw(gammas, marks, theta, pi, X, Z.astype(np.int64), psi, Corpus(docs, W))
    raise RuntimeError("could not draw a corpus within the length cap")
