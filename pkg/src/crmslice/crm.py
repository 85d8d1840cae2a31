"""Completely random measure atoms and series representations.

Atoms are generated as ``theta_k = tau(V_k, Gamma_k)`` where ``Gamma_k`` are the
ordered arrival times of a unit-rate Poisson process and ``V_k`` are i.i.d.
marks. Weights are never stored; they are recomputed from ``(V, Gamma)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats


# largest double below one; non-degenerate marks live in the open interval (0, 1)
MARK_MAX = float(np.nextafter(1.0, 0.0))


def xi(k, delta_xi: float = 1.0):
    """The slice sequence ``exp(-k / delta_xi)``; works on scalars and arrays."""
    if delta_xi <= 0:
        raise ValueError("delta_xi must be positive")
    return np.exp(-np.asarray(k, dtype=float) / delta_xi)


def slice_level(u, delta_xi: float = 1.0):
    """Largest ``k >= 0`` with ``xi(k) >= u``, for ``u`` in (0, 1].

    Computed in integer arithmetic after a float guess so that the result is
    consistent with :func:`xi` even at rounding boundaries.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0) or np.any(u > 1):
        raise ValueError("slice variables must lie in (0, 1]")
    k = np.floor(-delta_xi * np.log(u)).astype(np.int64)
    k = np.maximum(k, 0)
    # float guesses can be off by one either way
    k = np.where(xi(k, delta_xi) < u, k - 1, k)
    k = np.where(xi(k + 1, delta_xi) >= u, k + 1, k)
    return k if k.ndim else int(k)


def bondesson_tau(v, gamma, c: float):
    """Bondesson weight ``v * exp(-gamma / c)``."""
    return np.asarray(v) * np.exp(-np.asarray(gamma) / c)


@dataclass(frozen=True)
class BondessonBetaRep:
    """Bondesson series representation of the beta process.

    ``V ~ Beta(1, lam - 1)`` and ``tau(v, gamma) = v * exp(-gamma / (lam * alpha))``.
    With ``lam == 1`` the mark distribution is degenerate at 1.
    """

    alpha: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.lam < 1:
            raise ValueError("lam must be >= 1")

    @property
    def c(self) -> float:
        return self.lam * self.alpha

    @property
    def degenerate(self) -> bool:
        return self.lam == 1.0

    def sample_mark(self, rng: np.random.Generator, size=None):
        if self.degenerate:
            return np.ones(size) if size is not None else 1.0
        # for lam near 1 a sizeable share of draws rounds to exactly 1.0
        return np.minimum(rng.beta(1.0, self.lam - 1.0, size=size), MARK_MAX)

    def mark_logdensity(self, v):
        """log g(v); zero for the degenerate case (the mark is a constant)."""
        if self.degenerate:
            return np.zeros_like(np.asarray(v, dtype=float))
        v = np.asarray(v, dtype=float)
        inside = (v > 0) & (v < 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = stats.beta.logpdf(np.where(inside, v, 0.5), 1.0, self.lam - 1.0)
        return np.where(inside, out, -np.inf)

    def mark_from_uniform(self, w):
        """Inverse-CDF transform of a uniform ``w`` to a mark ``v``."""
        if self.degenerate:
            return np.ones_like(np.asarray(w, dtype=float))
        v = 1.0 - np.power(1.0 - np.asarray(w, dtype=float), 1.0 / (self.lam - 1.0))
        return np.minimum(v, MARK_MAX)

    def tau(self, v, gamma):
        return bondesson_tau(v, gamma, self.c)

    def tail_bound_gamma(self, tol: float = 1e-12) -> float:
        """A ``gamma`` beyond which ``tau(v, gamma) <= tol`` for every ``v``."""
        return -self.c * math.log(tol)


def simulate_prior_atoms(rep: BondessonBetaRep, count: int, rng: np.random.Generator):
    """Draw the first ``count`` atoms: (gammas, marks, weights)."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    gammas = np.cumsum(rng.exponential(1.0, size=count))
    marks = np.asarray(rep.sample_mark(rng, size=count), dtype=float)
    return gammas, marks, rep.tau(marks, gammas)


def extend_arrivals(gammas: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Append ``count`` further unit-rate Poisson arrivals after ``gammas``."""
    start = gammas[-1] if len(gammas) else 0.0
    return np.concatenate([gammas, start + np.cumsum(rng.exponential(1.0, size=count))])
