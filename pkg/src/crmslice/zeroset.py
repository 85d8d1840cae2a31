"""Zero-set exponent ``I(gamma)`` and its interpolation table.

``I(gamma) = int_{t >= gamma} int (1 - h(0 | tau(v, t))^N) G(dv) dt`` is the
negative log-probability that no atom beyond ``gamma`` is used by any
observation. Integrands here are written in the coordinate
``u = exp(-t / c)``, in which the tail ``[gamma, inf)`` becomes ``(0, exp(-gamma / c)]``
and ``dt = -c du / u``.
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate, interpolate, optimize, special

TABLE_FORMAT_VERSION = 1

QUAD_TOL = 1e-8


class ZeroSetError(RuntimeError):
    """Raised when the zero-set integral cannot be evaluated."""


# ---------------------------------------------------------------------------
# Integrands. Each is a callable ``f(u)`` in [0, 1] for ``u`` in (0, 1], with a
# vectorized ``ratio(u) = f(u) / u`` that stays finite as ``u -> 0``.


class BernoulliZeroSet:
    """``1 - h(0 | u)^N`` for Bernoulli counts with ``theta = u``.

    ``form="poisson"`` gives ``1 - exp(-N u)``, the Poisson approximation of
    the same quantity.
    """

    def __init__(self, n_obs: int, form: str = "exact"):
        if form not in ("exact", "poisson"):
            raise ValueError(f"unknown form {form!r}")
        self.n_obs = n_obs
        self.form = form
        self.name = f"beta-bernoulli(N={n_obs}, form={form})"

    def __call__(self, u):
        u = np.minimum(np.asarray(u, dtype=float), 1.0)
        if self.form == "exact":
            return -np.expm1(self.n_obs * np.log1p(-u))
        return -np.expm1(-self.n_obs * u)

    def ratio(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self(u) / u
        return np.where(u > 0, out, float(self.n_obs))


def bb_integrand(n_obs: int, form: str = "exact") -> BernoulliZeroSet:
    return BernoulliZeroSet(n_obs, form)


def bnb_log_zero_prob(a, b, r):
    """log BetaNegBinom(0; r, a, b) = log B(a, b + r) - log B(a, b).

    Uses a second-order expansion in ``a`` when ``a`` is small, where the
    direct difference of log-beta values cancels catastrophically.
    """
    a, b, r = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a, b, r)))
    small = a < 1e-5
    out = special.betaln(a, b + r) - special.betaln(a, b)
    if np.any(small):
        bs, rs, as_ = b[small], r[small], a[small]
        d1 = special.digamma(bs) - special.digamma(bs + rs)
        d2 = special.polygamma(1, bs) - special.polygamma(1, bs + rs)
        out = np.array(out, copy=True)
        out[small] = as_ * d1 + 0.5 * as_ * as_ * d2
    return out


class BnbZeroSet:
    """``int (1 - prod_d BNB(0; r_d, a, b)) Beta(v; 1, lam - 1) dv`` at ``u``.

    ``a = alpha*lam*v*u`` and ``b = lam*(1 - alpha*v*u)``; ``r`` is a scalar
    or a per-document array. The ``v`` integral is taken in ``w = (1-v)^(lam-1)``,
    which maps Beta(1, lam-1) to Unif(0, 1) and removes the endpoint singularity.
    """

    def __init__(self, r, alpha: float, lam: float):
        if lam <= 1:
            raise ValueError("lam must exceed 1 for the BNB model")
        self.r = np.atleast_1d(np.asarray(r, dtype=float))
        # documents sharing a failure parameter contribute identical factors
        self._r_unique, self._r_count = np.unique(self.r, return_counts=True)
        self.alpha = alpha
        self.lam = lam
        self.name = f"bnb(D={self.r.size}, alpha={alpha}, lam={lam})"
        self.gj_order = 64
        self._gj = None

    def one_minus_f(self, v, u):
        a = self.alpha * self.lam * v * u
        b = self.lam * (1.0 - self.alpha * v * u)
        logf = bnb_log_zero_prob(a[..., None], b[..., None], self._r_unique) @ self._r_count
        return -np.expm1(logf)

    def _v(self, w):
        return 1.0 - w ** (1.0 / (self.lam - 1.0))

    def __call__(self, u):
        """Scalar ``f(u)`` by adaptive quadrature over the mark."""
        u = float(u)
        if u <= 0:
            return 0.0
        val, _ = integrate.quad(
            lambda w: float(self.one_minus_f(np.asarray(self._v(w)), np.asarray(u))),
            0.0, 1.0, epsabs=1e-14, epsrel=1e-10, limit=200)
        return val

    def ratio(self, u):
        """Vectorized ``f(u) / u`` by Gauss-Jacobi quadrature over the mark.

        The Jacobi weight ``(1 - v)^(lam - 2)`` is the Beta(1, lam - 1) density
        up to a constant, so the rule absorbs the endpoint singularity.
        """
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if self._gj is None:
            x, w = special.roots_jacobi(self.gj_order, self.lam - 2.0, 0.0)
            self._gj = ((x + 1.0) / 2.0, w / w.sum())
        v, w = self._gj
        safe = np.where(u > 0, u, 1e-300)
        out = np.empty_like(safe)
        # chunk to bound memory: (len(u), nodes, docs)
        step = max(1, 2_000_000 // (v.size * self._r_unique.size))
        for i in range(0, safe.size, step):
            uu = safe[i:i + step, None]
            out[i:i + step] = (self.one_minus_f(v[None, :], uu) / uu) @ w
        return out


def bnb_integrand(r, alpha: float, lam: float) -> BnbZeroSet:
    return BnbZeroSet(r, alpha, lam)


# ---------------------------------------------------------------------------
# Exact evaluation


def _quad_u(f, lo: float, hi: float, name: str) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(lambda s: f(s) / s if s > 0 else 0.0, lo, hi,
                                    epsabs=QUAD_TOL * 1e-3, epsrel=QUAD_TOL, limit=200)
        except integrate.IntegrationWarning as exc:
            raise ZeroSetError(f"quadrature failed for {name}: {exc}") from exc
    if not np.isfinite(val):
        raise ZeroSetError(f"quadrature diverged for {name}")
    return val


def exponent_exact(gamma: float, integrand: Callable[[float], float], c: float) -> float:
    """``I(gamma)`` by adaptive quadrature in the u-coordinate."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    name = getattr(integrand, "name", repr(integrand))
    u0 = math.exp(-gamma / c)
    if u0 == 0.0:
        return 0.0
    return c * _quad_u(integrand, 0.0, u0, name)


def bb_exponent_closed_form(gamma: float, n_obs: int, c: float) -> float:
    """Closed form of the exact Bernoulli exponent, for small ``n_obs``.

    ``c * sum_j C(N, j) (-1)^(j+1) u^j / j``; alternating, so only reliable for
    ``N`` up to a few tens.
    """
    u = math.exp(-gamma / c)
    return c * sum(math.comb(n_obs, j) * (-1) ** (j + 1) * u ** j / j
                   for j in range(1, n_obs + 1))


def bnb_exponent(gamma: float, r, alpha: float, lam: float) -> float:
    """Exact BNB zero-set exponent by nested adaptive quadrature."""
    return exponent_exact(gamma, bnb_integrand(r, alpha, lam), lam * alpha)


# ---------------------------------------------------------------------------
# Interpolation table


@dataclass
class InterpTable:
    """Precomputed ``I`` on a grid with a natural cubic spline.

    With ``grid="gamma"`` the knots are evenly spaced in ``gamma`` over
    ``[0, -c log(epsilon)]`` (log-spaced in ``u``) and the spline is fitted
    to ``log I``; with ``grid="u"`` they are evenly spaced in ``u`` and the
    spline is fitted to ``I`` directly.
    """

    c: float
    gammas: np.ndarray
    values: np.ndarray
    epsilon: float = 1e-30
    grid: str = "gamma"
    name: str = ""
    _spline: interpolate.CubicSpline = field(init=False, repr=False)
    _log: bool = field(init=False, repr=False)

    def __post_init__(self):
        self.gammas = np.asarray(self.gammas, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self._log = self.grid == "gamma" and bool(np.all(self.values > 0))
        if self.grid == "gamma":
            x = self.gammas
            y = np.log(self.values) if self._log else self.values
        elif self.grid == "u":
            x = self.u[::-1]
            y = self.values[::-1]
        else:
            raise ValueError(f"unknown grid {self.grid!r}")
        self._spline = interpolate.CubicSpline(x, y, bc_type="natural")
        self._x0 = float(x[0])
        self._h = float(x[1] - x[0])
        self._n = len(x)
        # per-interval polynomial coefficients for fast scalar evaluation
        self._coef = [tuple(col) for col in self._spline.c.T.tolist()]
        self._gamma_max = float(self.gammas[-1])

    @property
    def u(self) -> np.ndarray:
        return np.exp(-self.gammas / self.c)

    def __call__(self, gamma):
        """Vectorized ``I(gamma)``."""
        g = np.asarray(gamma, dtype=float)
        if np.any(g < 0):
            raise ValueError("gamma must be nonnegative")
        if self.grid == "gamma":
            x = np.minimum(g, self._gamma_max)
        else:
            x = np.exp(-g / self.c)
        y = self._spline(x)
        out = np.exp(y) if self._log else np.maximum(y, 0.0)
        out = np.where(g > self._gamma_max, 0.0, out)
        return out if out.ndim else float(out)

    def value(self, gamma: float) -> float:
        """Fast scalar ``I(gamma)``."""
        if gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if gamma > self._gamma_max:
            return 0.0
        x = gamma if self.grid == "gamma" else math.exp(-gamma / self.c)
        i = int((x - self._x0) / self._h)
        i = min(max(i, 0), self._n - 2)
        dx = x - (self._x0 + i * self._h)
        c3, c2, c1, c0 = self._coef[i]
        y = ((c3 * dx + c2) * dx + c1) * dx + c0
        return math.exp(y) if self._log else max(y, 0.0)

    def save(self, path, key: str = "") -> None:
        np.savez(path, version=TABLE_FORMAT_VERSION, c=self.c, gammas=self.gammas,
                 values=self.values, epsilon=self.epsilon, grid=self.grid,
                 name=self.name, key=key)

    @classmethod
    def load(cls, path, key: str | None = None) -> "InterpTable":
        with np.load(path, allow_pickle=False) as data:
            if int(data["version"]) != TABLE_FORMAT_VERSION:
                raise ValueError(f"table version mismatch in {path}")
            if key is not None and str(data["key"]) != key:
                raise ValueError(f"table key mismatch in {path}")
            return cls(c=float(data["c"]), gammas=data["gammas"], values=data["values"],
                       epsilon=float(data["epsilon"]), grid=str(data["grid"]),
                       name=str(data["name"]))


def build_table(integrand, c: float, n_points: int = 1000, epsilon: float = 1e-30,
                grid: str = "gamma", panel_order: int = 8) -> InterpTable:
    """Tabulate ``I`` at ``n_points`` knots covering ``u`` in ``[epsilon, 1]``.

    Values are accumulated panel by panel from the far tail inward; each
    panel between adjacent knots uses Gauss-Legendre nodes on the vectorized
    ``integrand.ratio``. The residual tail below ``epsilon`` is an adaptive
    quadrature.
    """
    if n_points < 4:
        raise ValueError("need at least 4 grid points")
    name = getattr(integrand, "name", repr(integrand))
    gamma_max = -c * math.log(epsilon)
    if grid == "gamma":
        gammas = np.linspace(0.0, gamma_max, n_points)
        us = np.exp(-gammas / c)
    elif grid == "u":
        us = np.linspace(1.0, epsilon, n_points)
        gammas = -c * np.log(us)
        gammas[0] = 0.0
    else:
        raise ValueError(f"unknown grid {grid!r}")
    nodes, weights = np.polynomial.legendre.leggauss(panel_order)
    if grid == "gamma":
        lo, hi = gammas[:-1], gammas[1:]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        g = (mid[:, None] + half[:, None] * nodes).ravel()
        u = np.exp(-g / c)
        # dI = f(u) dgamma = u * ratio(u) dgamma
        vals = (u * integrand.ratio(u)).reshape(-1, panel_order)
        panels = half * (vals @ weights)
    else:
        lo, hi = us[1:], us[:-1]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        u = (mid[:, None] + half[:, None] * nodes).ravel()
        vals = integrand.ratio(u).reshape(-1, panel_order)
        panels = c * half * (vals @ weights)
    if not np.all(np.isfinite(panels)):
        raise ZeroSetError(f"table build produced non-finite values for {name}")
    values = np.empty(n_points)
    values[-1] = c * _quad_u(integrand, 0.0, us[-1], name)
    values[:-1] = values[-1] + np.cumsum(panels[::-1])[::-1]
    return InterpTable(c=c, gammas=gammas, values=values, epsilon=epsilon, grid=grid, name=name)


def interp(table: InterpTable, gamma):
    return table(gamma)


def table_key(**params) -> str:
    blob = json.dumps(params, sort_keys=True, default=lambda x: np.asarray(x).tolist())
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def cached_table(builder: Callable[[], InterpTable], cache_dir=None, **key_params) -> InterpTable:
    """Load a table keyed by ``key_params`` from ``cache_dir``, building it on a miss."""
    if cache_dir is None:
        return builder()
    key = table_key(**key_params)
    path = Path(cache_dir) / f"zeroset-{key}.npz"
    if path.exists():
        try:
            return InterpTable.load(path, key=key)
        except ValueError:
            pass
    table = builder()
    path.parent.mkdir(parents=True, exist_ok=True)
    table.save(path, key=key)
    return table


def sample_tail_arrival(table: InterpTable, lower: float, rng: np.random.Generator) -> float:
    """Next arrival after ``lower`` given that no later atom is used.

    Conditioned on the zero set, the remaining arrivals form a Poisson
    process with intensity ``1 + I'(g)``, whose integrated rate over
    ``[lower, g]`` is ``(g - lower) - I(lower) + I(g)``; invert it at an
    Exp(1) draw.
    """
    e = rng.exponential(1.0)
    i_lo = table.value(lower)
    target = e + i_lo

    def excess(g):
        return (g - lower) + table.value(g) - target

    hi = lower + e + i_lo + 1.0
    return optimize.brentq(excess, lower, hi, xtol=1e-12, rtol=1e-12)
