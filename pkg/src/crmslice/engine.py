"""Adaptive-truncation slice sampler for CRM-based models.

The sampler owns the CRM atoms (arrivals ``gammas`` and ``marks``) and the
slice variables; a model plugin owns the assignments, traits and data. One
sweep runs, in order: slice variables, truncation levels, traits, occupied
atoms, the last occupied atom, the unoccupied tail, assignments, local
truncation levels.

Atom ``k`` (1-based, as in the model) lives at array index ``k - 1``.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .crm import BondessonBetaRep, simulate_prior_atoms, slice_level, xi
from .errors import InvariantViolation
from .kernels import (MhOutcome, RwConfig, mh_step, propose_gamma_bounded,
                      propose_gamma_tail, propose_v)
from .zeroset import sample_tail_arrival


class CRMModel(Protocol):
    """What the samplers need from a model plugin."""

    rep: BondessonBetaRep

    @property
    def n_units(self) -> int: ...

    def active_index(self) -> np.ndarray: ...

    def resize(self, K: int) -> None: ...

    def sample_traits(self, K: int, rng: np.random.Generator) -> None: ...

    def atom_loglik(self, k: int, v: float, gamma: float) -> float: ...

    def tail_mark_logaccept(self, v: float, gamma: float) -> float: ...

    def zero_set(self): ...

    def update_rates(self, gammas, marks, rng: np.random.Generator) -> None: ...

    def uniforms_per_unit(self, K: int) -> int: ...

    def sample_assignments(self, levels, gammas, marks, uniforms, delta_xi: float,
                           use_slice: bool, executor: "RowExecutor") -> None: ...

    def update_local_truncation(self) -> None: ...

    def count_matrix(self) -> np.ndarray: ...

    def check_invariants(self) -> None: ...


@dataclass
class ChainState:
    gammas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    marks: np.ndarray = field(default_factory=lambda: np.zeros(0))
    U: np.ndarray = field(default_factory=lambda: np.zeros(0))
    levels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    K: int = 0
    K_prev: int = 0
    iteration: int = 0


@dataclass
class TraceRecord:
    iteration: int
    statistic: float
    K: int
    K_prev: int
    n_active: int
    accept_sub1: float
    accept_sub2: float
    seconds: float
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Elementary steps


def sample_slices(active: np.ndarray, delta_xi: float, rng: np.random.Generator) -> np.ndarray:
    """``U_n ~ Unif(0, xi(k_n)]``."""
    return xi(active, delta_xi) * (1.0 - rng.random(len(active)))


def update_truncation(active: np.ndarray, U: np.ndarray, delta_xi: float):
    """Return ``(K, K_prev, levels)``; ``levels[n]`` is the largest index ``U_n`` allows."""
    if len(U) == 0:
        return 0, 0, np.zeros(0, dtype=np.int64)
    levels = np.atleast_1d(slice_level(U, delta_xi))
    return int(levels.max()), int(active.max()), levels


def khat(k, x, k_first, k_second):
    """Value the first active index would take if entry ``k`` were set to ``x``.

    Vectorized over any of the arguments.
    """
    k = np.asarray(k)
    x = np.asarray(x)
    out = np.where((x == 0) & (k == k_first), k_second,
                   np.where((x > 0) & (k > k_first), k, k_first))
    return out if out.ndim else int(out)


def local_truncation(X: np.ndarray):
    """First and second largest 1-based active column per row (0 if none)."""
    X = np.asarray(X)
    n, K = X.shape
    if K == 0:
        z = np.zeros(n, dtype=np.int64)
        return z, z.copy()
    active = X > 0
    idx = np.arange(1, K + 1)
    first = np.max(np.where(active, idx, 0), axis=1)
    below = active & (idx[None, :] < first[:, None])
    second = np.max(np.where(below, idx, 0), axis=1)
    return first.astype(np.int64), second.astype(np.int64)


def _slice_terms(k: int, first0, lo, lv, delta_xi: float):
    """Slice log-weight of ``x = 1`` minus that of ``x = 0`` for column ``k``.

    While column ``k`` is visited, entries above ``k`` still hold their old
    values. If the old row has an active index above ``k``, that index is the
    row's first active index whatever ``x`` is, so the slice factor cancels.
    Otherwise the first index is ``k`` when ``x > 0`` and ``lo`` (the last
    active index already visited) when ``x = 0``.
    """
    return np.where(first0 > k, 0.0, np.where(k <= lv, (k - lo) / delta_xi, -np.inf))


def sample_count_columns(model, rows: slice, K: int, levels: np.ndarray, log_h: np.ndarray,
                         uniforms: np.ndarray, delta_xi: float, use_slice: bool) -> None:
    """Gibbs update of ``X[rows, :K]`` one column at a time, vectorized over rows.

    ``log_h[k-1, x]`` is ``log h(x | theta_k)`` for ``x`` in the finite support.
    The first active index is tracked as the row changes, so each conditional
    uses the current row rather than the row at the start of the step.
    """
    first0 = model.kmax[rows]
    lo = np.zeros(len(first0), dtype=np.int64)
    lv = levels[rows]
    for k in range(1, K + 1):
        logw = model.column_data_loglik(k, rows) + log_h[k - 1][None, :]
        if use_slice:
            logw[:, 1:] += _slice_terms(k, first0, lo, lv, delta_xi)[:, None]
        top = logw.max(axis=1, keepdims=True)
        if not np.all(np.isfinite(top)):
            raise InvariantViolation(f"no admissible value for column {k}")
        cdf = np.cumsum(np.exp(logw - top), axis=1)
        u = uniforms[rows, k - 1] * cdf[:, -1]
        new = (cdf < u[:, None]).sum(axis=1)
        model.set_column(k, rows, new)
        lo = np.where(new > 0, k, lo)


def sample_binary_columns(resid, X, psi, rows: slice, K: int, first0, levels, logit,
                          sigma2: float, uniforms, delta_xi: float, use_slice: bool) -> None:
    """Specialization of :func:`sample_count_columns` to 0/1 entries and a Gaussian
    linear likelihood with cached residuals ``resid = Y - X psi``.

    Uses the same uniforms with the decision rule written on the log-odds
    scale (``x = 1`` iff ``log-odds > log(1/u - 1)``), so both paths give the
    same draws up to floating-point rounding. Everything that does not depend
    on the current row is computed once for all columns.
    """
    # basic slices are views, so updates land in the caller's arrays
    R = resid[rows]
    Xr = X[rows]
    n = R.shape[0]
    with np.errstate(divide="ignore"):
        threshold = np.log(1.0 / uniforms[rows, :K] - 1.0)
    sq = np.einsum("kd,kd->k", psi[:K], psi[:K])
    offset = logit[:K] - sq / (2.0 * sigma2)
    if use_slice:
        ks = np.arange(1, K + 1)
        free = first0[rows, None] <= ks[None, :]
        slope = free / delta_xi
        barrier = np.where(free & (ks[None, :] > levels[rows, None]), -np.inf, 0.0)
        lo = np.zeros(n)
    for k in range(1, K + 1):
        p = psi[k - 1]
        xk = Xr[:, k - 1]
        delta = R @ p
        delta += xk * sq[k - 1]
        delta *= 1.0 / sigma2
        delta += offset[k - 1]
        if use_slice:
            delta += slope[:, k - 1] * (k - lo)
            delta += barrier[:, k - 1]
        new = delta > threshold[:, k - 1]
        change = np.nonzero(new != xk.astype(bool))[0]
        if len(change):
            R[change] -= np.where(new[change], 1.0, -1.0)[:, None] * p
            xk[change] = new[change]
        if use_slice:
            lo[new] = k


def row_chunks(n: int, workers: int) -> list[slice]:
    workers = max(1, min(workers, n)) if n else 1
    bounds = [i * n // workers for i in range(workers + 1)]
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


class RowExecutor:
    """Runs a function over contiguous row blocks, serially or on a thread pool.

    Every random number a block consumes is drawn before the call, so the
    result does not depend on the number of workers.
    """

    def __init__(self, workers: int = 1):
        self.workers = max(1, int(workers))
        self._pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None

    def run(self, fn, n_rows: int) -> None:
        chunks = row_chunks(n_rows, self.workers)
        if self._pool is None:
            for rows in chunks:
                fn(rows)
        else:
            list(self._pool.map(fn, chunks))

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()


# ---------------------------------------------------------------------------
# Atom updates shared by the slice and fixed-truncation samplers


class _AtomUpdater:
    def __init__(self, model: CRMModel, rw: RwConfig, mh_steps: int = 1):
        self.model = model
        self.rep = model.rep
        self.rw = rw
        self.mh_steps = mh_steps

    def _target(self, k, lower, upper, tail_exponent):
        model, rep = self.model, self.rep
        degenerate = rep.degenerate

        def logp(state):
            v, g = (1.0, state) if degenerate else state
            if g < lower or (upper is not None and g > upper):
                return -math.inf
            if not degenerate and not 0.0 < v < 1.0:
                return -math.inf
            lp = model.atom_loglik(k, v, g)
            if not degenerate:
                lp += float(rep.mark_logdensity(v))
            if upper is None:
                lp -= g - lower
                if tail_exponent is not None:
                    lp -= tail_exponent(g)
            return lp

        return logp

    def _proposal(self, lower, upper):
        rw, rep = self.rw, self.rep

        def gamma_prop(g, rng):
            if upper is None:
                return propose_gamma_tail(g, lower, rw.n_gamma, rng)
            return propose_gamma_bounded(g, lower, upper, rw.n_gamma, rng)

        if rep.degenerate:
            return gamma_prop

        def joint(state, rng):
            v, g = state
            v1, qv = propose_v(v, rw.delta_v, rng)
            g1, qg = gamma_prop(g, rng)
            return (v1, g1), qv + qg

        return joint

    def update(self, gammas, marks, k, upper, tail_exponent, rng) -> list[MhOutcome]:
        i = k - 1
        lower = gammas[i - 1] if i > 0 else 0.0
        cur = gammas[i] if self.rep.degenerate else (marks[i], gammas[i])
        logp = self._target(k, lower, upper, tail_exponent)
        prop = self._proposal(lower, upper)
        outs = []
        lp = None
        for _ in range(self.mh_steps):
            out = mh_step(logp, cur, prop, rng, current_logp=lp, hastings=self.rw.hastings)
            cur, lp = out.value, out.log_target
            outs.append(out)
        if self.rep.degenerate:
            gammas[i] = cur
        else:
            marks[i], gammas[i] = cur
        return outs

    def occupied(self, gammas, marks, upto: int, rng) -> list[MhOutcome]:
        """Interval-constrained updates for atoms ``1..upto``."""
        outs = []
        for k in range(1, upto + 1):
            outs += self.update(gammas, marks, k, gammas[k], None, rng)
        return outs


def _rate(outs: list[MhOutcome]) -> float:
    return sum(o.accepted for o in outs) / len(outs) if outs else float("nan")


def parity_of(X: np.ndarray) -> int:
    return int(np.count_nonzero(X) % 2 == 0)


# ---------------------------------------------------------------------------
# Slice sampler


class SliceSampler:
    """Adaptive-truncation slice sampler.

    Parameters
    ----------
    model : a model plugin (see :class:`CRMModel`)
    delta_xi : scale of the slice sequence ``xi(k) = exp(-k / delta_xi)``
    rw : step-size configuration of the arrival and mark proposals
    seed : seed for the global and assignment random streams
    workers : number of threads for the assignment step
    check : verify every chain invariant after each sweep
    """

    def __init__(self, model: CRMModel, delta_xi: float = 1.0, rw: RwConfig | None = None,
                 seed=None, workers: int = 1, check: bool = False, mh_steps: int = 1):
        if delta_xi <= 0:
            raise ValueError("delta_xi must be positive")
        self.model = model
        self.rep = model.rep
        self.delta_xi = delta_xi
        self.rw = rw or RwConfig()
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        g, a = ss.spawn(2)
        self.rng = np.random.default_rng(g)
        self.assign_rng = np.random.default_rng(a)
        self.workers = workers
        self.check = check
        self.atoms = _AtomUpdater(model, self.rw, mh_steps)
        self.state = ChainState()
        self.executor = RowExecutor(workers)
        # indices occupied by the initial assignments get atoms from the prior
        K0 = int(model.active_index().max()) if model.n_units else 0
        if K0:
            gammas, marks, _ = simulate_prior_atoms(self.rep, K0, self.rng)
            self.set_atoms(gammas, marks)

    def set_atoms(self, gammas, marks) -> None:
        """Install atoms for a model state set from outside (e.g. a prior draw)."""
        self.state.gammas = np.array(gammas, dtype=float)
        self.state.marks = np.array(marks, dtype=float)
        self.state.K = len(self.state.gammas)

    def sweep(self) -> TraceRecord:
        t0 = time.perf_counter()
        st, model, rng = self.state, self.model, self.rng

        active = model.active_index()
        st.U = sample_slices(active, self.delta_xi, rng)
        K, K_prev, st.levels = update_truncation(active, st.U, self.delta_xi)
        st.K, st.K_prev = K, K_prev
        if len(st.gammas) < K_prev:
            raise InvariantViolation("occupied atoms are not instantiated")
        # atoms past the last occupied one are redrawn below
        gammas = st.gammas[:K_prev].copy()
        marks = st.marks[:K_prev].copy()
        model.resize(K)
        model.sample_traits(K, rng)

        sub1 = self.atoms.occupied(gammas, marks, K_prev - 1, rng)
        sub2 = []
        if K_prev >= 1:
            table = model.zero_set()
            sub2 = self.atoms.update(gammas, marks, K_prev, None, table.value, rng)
        gammas, marks = self._extend_tail(gammas, marks, K, rng)
        st.gammas, st.marks = gammas, marks

        model.update_rates(gammas, marks, rng)
        uniforms = self.assign_rng.random((model.n_units, model.uniforms_per_unit(K)))
        model.sample_assignments(st.levels, gammas, marks, uniforms, self.delta_xi,
                                 True, self.executor)
        model.update_local_truncation()
        st.iteration += 1
        if self.check:
            self.check_invariants()
        X = model.count_matrix()
        return TraceRecord(
            iteration=st.iteration, statistic=parity_of(X), K=K, K_prev=K_prev,
            n_active=int(np.count_nonzero(X.any(axis=0))) if X.size else 0,
            accept_sub1=_rate(sub1), accept_sub2=_rate(sub2),
            seconds=time.perf_counter() - t0)

    def _extend_tail(self, gammas, marks, K, rng):
        """Draw atoms ``K_prev+1..K`` exactly from their conditional given no later use."""
        n_new = K - len(gammas)
        if n_new <= 0:
            return gammas, marks
        table = self.model.zero_set()
        new_g = np.empty(n_new)
        new_v = np.ones(n_new)
        lower = gammas[-1] if len(gammas) else 0.0
        for j in range(n_new):
            lower = sample_tail_arrival(table, lower, rng)
            new_g[j] = lower
            if not self.rep.degenerate:
                new_v[j] = self._tail_mark(lower, rng)
        return np.concatenate([gammas, new_g]), np.concatenate([marks, new_v])

    def _tail_mark(self, gamma, rng, max_tries: int = 1_000_000):
        # rejection from G: accept with the probability that the atom is unused
        for _ in range(max_tries):
            v = float(self.rep.sample_mark(rng))
            if math.log(rng.uniform()) < self.model.tail_mark_logaccept(v, gamma):
                return v
        raise RuntimeError(f"tail mark rejection sampler stalled at gamma={gamma}")

    def run(self, iterations: int, callback=None) -> list[TraceRecord]:
        trace = []
        for _ in range(iterations):
            rec = self.sweep()
            if callback is not None:
                callback(self, rec)
            trace.append(rec)
        return trace

    def check_invariants(self) -> None:
        st, model = self.state, self.model
        X = model.count_matrix()
        if X.shape[1] != st.K or len(st.gammas) != st.K or len(st.marks) != st.K:
            raise InvariantViolation("arrays do not match the global truncation")
        if np.any(np.diff(st.gammas) <= 0) or (st.K and st.gammas[0] <= 0):
            raise InvariantViolation("arrivals are not strictly increasing")
        active = model.active_index()
        if np.any(active > st.levels):
            raise InvariantViolation("a slice variable exceeds xi of its active index")
        model.check_invariants()

    def close(self):
        self.executor.close()
