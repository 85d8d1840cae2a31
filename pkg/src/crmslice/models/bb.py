"""Beta-Bernoulli linear-Gaussian latent feature model.

``X_nk ~ Bern(exp(-Gamma_k / c))``, ``psi_k ~ N(0, sigma0^2 I)`` and
``y_n ~ N(sum_k X_nk psi_k, sigma^2 I)``. The beta process is represented with
``lam = 1``, so marks are identically one and never sampled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from ..crm import BondessonBetaRep
from ..engine import khat, local_truncation, sample_binary_columns, sample_count_columns
from ..errors import InvariantViolation
from ..zeroset import bb_integrand, build_table, cached_table


@dataclass(frozen=True)
class BbParams:
    sigma: float = 0.5
    sigma0: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if min(self.sigma, self.sigma0, self.c) <= 0:
            raise ValueError("sigma, sigma0 and c must be positive")


def log1mexp(x):
    """``log(1 - exp(-x))`` for ``x >= 0``, accurate near both ends."""
    if isinstance(x, (float, int)):
        if x == 0:
            return -math.inf
        return math.log1p(-math.exp(-x)) if x > math.log(2) else math.log(-math.expm1(-x))
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(x > math.log(2), np.log1p(-np.exp(-x)), np.log(-np.expm1(-x)))
    return out if out.ndim else float(out)


def count_pmf(x: int, gamma: float, c: float) -> float:
    """Bernoulli probability of ``x`` under weight ``exp(-gamma / c)``."""
    if x not in (0, 1):
        raise ValueError("beta-Bernoulli counts are 0 or 1")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    theta = math.exp(-gamma / c)
    return theta if x == 1 else 1.0 - theta


def _bern_loglik(gamma, m_k, n_obs, c):
    if n_obs - m_k == 0:
        return -m_k * gamma / c
    return -m_k * gamma / c + (n_obs - m_k) * log1mexp(gamma / c)


def gamma_logtarget_sub1(gamma, m_k, n_obs, c, lower, upper) -> float:
    """Unnormalized log conditional of an occupied arrival between its neighbours."""
    if not lower <= gamma <= upper:
        return -math.inf
    return float(_bern_loglik(gamma, m_k, n_obs, c))


def gamma_logtarget_sub2(gamma, m_k, n_obs, c, lower, table) -> float:
    """Unnormalized log conditional of the last occupied arrival.

    ``table`` is an interpolated zero-set exponent (``None`` means zero).
    """
    if gamma < lower:
        return -math.inf
    out = _bern_loglik(gamma, m_k, n_obs, c) - gamma
    if table is not None:
        out -= table.value(gamma)
    return float(out)


def sample_traits_joint(X, Y, sigma, sigma0, rng):
    """Draw ``psi`` (K x D) from its matrix-normal full conditional."""
    X = np.asarray(X, dtype=float)
    K = X.shape[1]
    D = Y.shape[1]
    if K == 0:
        return np.zeros((0, D))
    Q = X.T @ X + (sigma**2 / sigma0**2) * np.eye(K)
    chol = cho_factor(Q, lower=True, check_finite=False)
    mean = cho_solve(chol, X.T @ Y, check_finite=False)
    noise = solve_triangular(chol[0], rng.standard_normal((K, D)), lower=True, trans="T",
                             check_finite=False)
    return mean + sigma * noise


class BetaBernoulliModel:
    """Model plugin for the slice and fixed-truncation samplers.

    The dense assignment matrix has spare capacity beyond the current number
    of columns ``K``; columns past ``K`` are always zero.
    """

    support = 1
    # route assignments through the generic finite-support sampler (slower; for cross-checks)
    generic_assignments = False

    def __init__(self, Y, params: BbParams = BbParams(), zero_set_form: str = "exact",
                 cache_dir=None, table_points: int = 1000, table=None):
        self.Y = np.array(Y, dtype=float, ndmin=2)
        if not np.all(np.isfinite(self.Y)):
            raise ValueError("data must be finite")
        self.params = params
        self.N, self.D = self.Y.shape
        self.rep = BondessonBetaRep(alpha=params.c, lam=1.0)
        self.zero_set_form = zero_set_form
        self.cache_dir = cache_dir
        self.table_points = table_points
        self._table = table
        self.K = 0
        self._alloc(8)
        self.resid = self.Y.copy()
        self.kmax = np.zeros(self.N, dtype=np.int64)
        self.kmax2 = np.zeros(self.N, dtype=np.int64)

    def _alloc(self, cap):
        self.X = np.zeros((self.N, cap), dtype=np.int8)
        self.psi = np.zeros((cap, self.D))
        self.m = np.zeros(cap, dtype=np.int64)

    @property
    def n_units(self) -> int:
        return self.N

    def active_index(self):
        return self.kmax

    def count_matrix(self):
        return self.X[:, :self.K]

    def theta(self, gammas):
        return np.exp(-np.asarray(gammas) / self.params.c)

    def resize(self, K: int) -> None:
        cap = self.X.shape[1]
        if K > cap:
            new = max(K, 2 * cap)
            X, psi, m = self.X, self.psi, self.m
            self._alloc(new)
            self.X[:, :cap], self.psi[:cap], self.m[:cap] = X, psi, m
        if K < self.K:
            if self.X[:, K:self.K].any():
                raise InvariantViolation("shrinking would drop active assignments")
            self.psi[K:self.K] = 0.0
        self.K = K

    def set_state(self, X, psi) -> None:
        X = np.asarray(X)
        self.resize(0)
        self._alloc(max(8, X.shape[1]))
        self.K = X.shape[1]
        self.X[:, :self.K] = X
        self.psi[:self.K] = psi
        self.m[:self.K] = X.sum(axis=0)
        self._refresh_resid()
        self.update_local_truncation()

    def _refresh_resid(self):
        self.resid = self.Y - self.X[:, :self.K] @ self.psi[:self.K]

    def sample_traits(self, K: int, rng) -> None:
        p = self.params
        self.psi[:K] = sample_traits_joint(self.X[:, :K], self.Y, p.sigma, p.sigma0, rng)
        self._refresh_resid()

    def atom_loglik(self, k: int, v: float, gamma: float) -> float:
        return float(_bern_loglik(gamma, int(self.m[k - 1]), self.N, self.params.c))

    def tail_mark_logaccept(self, v: float, gamma: float) -> float:
        return self.N * float(log1mexp(gamma / self.params.c))

    def zero_set(self):
        if self._table is None:
            self._table = cached_table(
                lambda: build_table(bb_integrand(self.N, self.zero_set_form), self.params.c,
                                    n_points=self.table_points),
                cache_dir=self.cache_dir, model="bb", n_obs=self.N, c=self.params.c,
                form=self.zero_set_form, n_points=self.table_points)
        return self._table

    def update_rates(self, gammas, marks, rng) -> None:
        # weights are a deterministic function of the arrivals
        return None

    def column_data_loglik(self, k: int, rows: slice):
        psi = self.psi[k - 1]
        base = self.resid[rows] + self.X[rows, k - 1, None] * psi
        out = np.zeros((base.shape[0], 2))
        # row-wise reduction keeps results independent of how rows are chunked
        out[:, 1] = (2.0 * (base * psi).sum(axis=1) - psi @ psi) / (2.0 * self.params.sigma**2)
        return out

    def set_column(self, k: int, rows: slice, values) -> None:
        delta = values - self.X[rows, k - 1]
        changed = np.nonzero(delta)[0]
        if len(changed):
            idx = np.arange(rows.start, rows.stop)[changed]
            self.resid[idx] -= delta[changed, None] * self.psi[k - 1]
            self.X[idx, k - 1] = values[changed]

    def log_h(self, gammas):
        logit = -np.asarray(gammas, dtype=float) / self.params.c
        return np.column_stack([log1mexp(-logit), logit])

    def uniforms_per_unit(self, K: int) -> int:
        return K

    def sample_assignments(self, levels, gammas, marks, uniforms, delta_xi, use_slice, executor):
        K = self.K
        log_h = self.log_h(gammas[:K])
        if self.generic_assignments:
            executor.run(lambda rows: sample_count_columns(
                self, rows, K, levels, log_h, uniforms, delta_xi, use_slice), self.N)
        else:
            logit = log_h[:, 1] - log_h[:, 0]
            executor.run(lambda rows: sample_binary_columns(
                self.resid, self.X, self.psi, rows, K, self.kmax, levels, logit,
                self.params.sigma**2, uniforms, delta_xi, use_slice), self.N)
        # the residuals were kept current entry by entry
        self.m[:K] = self.X[:, :K].sum(axis=0)

    def x_entry_weights(self, n: int, k: int, theta: float, level: int, delta_xi: float):
        """Unnormalized weights of ``X_nk = 0`` and ``X_nk = 1`` under the slice conditional."""
        data = self.column_data_loglik(k, slice(n, n + 1))[0]
        w = np.exp(data - data.max()) * np.array([1.0 - theta, theta])
        for x in (0, 1):
            kh = khat(k, x, self.kmax[n], self.kmax2[n])
            w[x] *= math.exp(kh / delta_xi) if kh <= level else 0.0
        return w

    def update_local_truncation(self) -> None:
        self.kmax, self.kmax2 = local_truncation(self.X[:, :self.K])

    def resample_data(self, rng) -> None:
        mean = self.X[:, :self.K] @ self.psi[:self.K]
        self.Y = mean + self.params.sigma * rng.standard_normal(self.Y.shape)
        self._refresh_resid()

    def check_invariants(self) -> None:
        X = self.X[:, :self.K]
        if self.X[:, self.K:].any():
            raise InvariantViolation("assignments beyond the truncation")
        if not np.array_equal(self.m[:self.K], X.sum(axis=0)):
            raise InvariantViolation("cached feature counts are stale")
        k1, k2 = local_truncation(X)
        if not (np.array_equal(k1, self.kmax) and np.array_equal(k2, self.kmax2)):
            raise InvariantViolation("active indices are stale")
        if not np.allclose(self.resid, self.Y - X @ self.psi[:self.K], atol=1e-8):
            raise InvariantViolation("cached residuals are stale")


def simulate_prior(n_obs: int, dim: int, params: BbParams, rng, tol: float = 1e-12):
    """Ancestral draw from the infinite model.

    Atoms are generated until the expected number of further activations is
    below ``tol``; the returned arrays keep only atoms up to the last active one.
    Returns ``(gammas, X, psi, Y)``.
    """
    c = params.c
    gammas = []
    g = 0.0
    while True:
        g += rng.exponential()
        if n_obs * c * math.exp(-g / c) < tol:
            break
        gammas.append(g)
    gammas = np.array(gammas)
    theta = np.exp(-gammas / c)
    X = (rng.random((n_obs, len(gammas))) < theta).astype(np.int8)
    used = np.nonzero(X.any(axis=0))[0]
    K = used[-1] + 1 if len(used) else 0
    X, gammas = X[:, :K], gammas[:K]
    psi = params.sigma0 * rng.standard_normal((K, dim))
    Y = X @ psi + params.sigma * rng.standard_normal((n_obs, dim))
    return gammas, X, psi, Y
