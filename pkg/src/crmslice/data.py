"""Synthetic data, bag-of-words corpora and train/test splits."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models.bnb import Corpus


@dataclass(frozen=True)
class SyntheticSpec:
    """Beta-Bernoulli synthetic regime.

    ``K_true`` and ``D`` default to ``2 ceil(log N)`` and
    ``2 ceil(N log N / (N - log N))`` with the natural logarithm.
    """

    N: int
    K_true: int | None = None
    D: int | None = None
    sigma: float = 0.2
    sigma0: float = 0.5
    c: float = 1.0
    seed: int = 0
    log_base: float = math.e

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if self.sigma < 0 or self.sigma0 <= 0 or self.c <= 0:
            raise ValueError("invalid noise or scale parameter")

    def _log(self, x):
        return math.log(x) / math.log(self.log_base)

    @property
    def k_true(self) -> int:
        return self.K_true if self.K_true is not None else 2 * math.ceil(self._log(self.N))

    @property
    def dim(self) -> int:
        if self.D is not None:
            return self.D
        ln = self._log(self.N)
        return 2 * math.ceil(self.N * ln / (self.N - ln))


def gen_bb_synthetic(spec: SyntheticSpec):
    """Ancestral draw from the truncated beta-Bernoulli model: ``(Y, psi, X)``."""
    rng = np.random.default_rng(spec.seed)
    K, D = spec.k_true, spec.dim
    gammas = np.cumsum(rng.exponential(size=K))
    theta = np.exp(-gammas / spec.c)
    X = (rng.random((spec.N, K)) < theta).astype(np.int64)
    psi = spec.sigma0 * rng.standard_normal((K, D))
    Y = X @ psi + spec.sigma * rng.standard_normal((spec.N, D))
    return Y, psi, X


def write_matrix_csv(path, M) -> None:
    M = np.atleast_2d(np.asarray(M))
    fmt = "%d" if np.issubdtype(M.dtype, np.integer) else "%.17g"
    np.savetxt(path, M, delimiter=",", fmt=fmt)


def read_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def save_bb_dataset(out_dir, Y, psi, X) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(out / "Y.csv", Y)
    write_matrix_csv(out / "psi_true.csv", psi)
    write_matrix_csv(out / "X_true.csv", X)


# ---------------------------------------------------------------------------
# Bag-of-words corpora: header ``D W NNZ`` then ``doc word count`` lines, 1-based ids


def load_bow_corpus(path, min_count: int | None = None) -> Corpus:
    """Read a sparse doc-word-count file into token sequences.

    Tokens of a document are listed in increasing word order. With
    ``min_count`` only words occurring more than ``min_count`` times overall
    are kept, and the vocabulary is renumbered in the original order.
    """
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 3:
        raise ValueError("missing 'D W NNZ' header")
    try:
        D, W, nnz = (int(t) for t in tokens[:3])
        body = np.array(tokens[3:], dtype=np.int64)
    except ValueError as exc:
        raise ValueError(f"malformed corpus file: {exc}") from None
    if len(body) != 3 * nnz:
        raise ValueError(f"expected {nnz} entries, found {len(body) / 3:g}")
    triples = body.reshape(nnz, 3)
    d, w, n = triples[:, 0] - 1, triples[:, 1] - 1, triples[:, 2]
    if nnz and (d.min() < 0 or d.max() >= D):
        raise ValueError("document id out of range")
    if nnz and (w.min() < 0 or w.max() >= W):
        raise ValueError("word id out of range")
    if nnz and n.min() < 0:
        raise ValueError("negative count")
    if min_count is not None:
        totals = np.bincount(w, weights=n, minlength=W)
        keep = totals > min_count
        new_id = np.cumsum(keep) - 1
        sel = keep[w]
        d, w, n = d[sel], new_id[w[sel]], n[sel]
        W = int(keep.sum())
    order = np.lexsort((w, d))
    d, w, n = d[order], w[order], n[order]
    docs = [np.zeros(0, dtype=np.int64) for _ in range(D)]
    for doc in np.unique(d):
        m = d == doc
        docs[doc] = np.repeat(w[m], n[m])
    return Corpus(docs, W)


def save_bow_corpus(corpus: Corpus, path) -> None:
    lines = []
    for di, doc in enumerate(corpus.docs):
        words, counts = np.unique(doc, return_counts=True)
        lines += [f"{di + 1} {wi + 1} {ci}" for wi, ci in zip(words, counts)]
    with open(path, "w") as fh:
        fh.write(f"{corpus.D} {corpus.W} {len(lines)}\n")
        fh.writelines(line + "\n" for line in lines)


def n_test_tokens(n_tokens: int, test_frac: float) -> int:
    """``test_frac * n_tokens`` rounded to nearest with ties rounded down.

    A small tolerance absorbs representation error such as ``10 * 0.3 = 3.0000000000000004``.
    """
    return max(0, math.ceil(test_frac * n_tokens - 0.5 - 1e-9))


def split_words(corpus: Corpus, test_frac: float = 0.3, seed=0):
    """Per-document uniform random split of token positions into (train, test)."""
    if not 0 <= test_frac < 1:
        raise ValueError("test_frac must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for doc in corpus.docs:
        k = n_test_tokens(len(doc), test_frac)
        perm = rng.permutation(len(doc))
        is_test = np.zeros(len(doc), dtype=bool)
        is_test[perm[:k]] = True
        train.append(doc[~is_test])
        test.append(doc[is_test])
    return Corpus(train, corpus.W), Corpus(test, corpus.W)


def gen_topic_corpus(D: int = 20, W: int = 50, n_topics: int = 5, doc_len=(80, 160),
                     topic_concentration: float = 0.1, doc_concentration: float = 0.5,
                     seed=0):
    """Mixture-of-topics corpus: returns ``(corpus, topics, doc_proportions)``."""
    rng = np.random.default_rng(seed)
    topics = rng.dirichlet(np.full(W, topic_concentration), size=n_topics)
    props = rng.dirichlet(np.full(n_topics, doc_concentration), size=D)
    docs = []
    for d in range(D):
        n = int(rng.integers(doc_len[0], doc_len[1] + 1))
        z = rng.choice(n_topics, size=n, p=props[d])
        cdf = np.cumsum(topics[z], axis=1)
        u = rng.random(n)[:, None] * cdf[:, -1:]
        docs.append(np.sort(np.minimum((cdf < u).sum(axis=1), W - 1)))
    return Corpus(docs, W), topics, props
