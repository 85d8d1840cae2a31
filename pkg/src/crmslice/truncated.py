"""Fixed-truncation Gibbs sampler sharing the model plugins of the slice sampler.

The finite model keeps the first ``K_fixed`` atoms of the series. Assignments
are updated without slice factors; occupied arrivals use the interval target
and the last arrival uses the exponential-increment target with no zero-set
term, since the finite model has no atoms past ``K_fixed``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .crm import simulate_prior_atoms
from .engine import ChainState, RowExecutor, TraceRecord, _AtomUpdater, _rate, parity_of
from .errors import ConfigError, InvariantViolation
from .kernels import RwConfig


@dataclass(frozen=True)
class TruncConfig:
    K_fixed: int

    def __post_init__(self):
        if self.K_fixed < 1:
            raise ConfigError("K_fixed must be >= 1")


class TruncatedSampler:
    def __init__(self, model, K_fixed: int, rw: RwConfig | None = None, seed=None,
                 workers: int = 1, check: bool = False, mh_steps: int = 1):
        self.config = TruncConfig(K_fixed)
        self.model = model
        self.rep = model.rep
        self.rw = rw or RwConfig()
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        g, a = ss.spawn(2)
        self.rng = np.random.default_rng(g)
        self.assign_rng = np.random.default_rng(a)
        self.check = check
        self.atoms = _AtomUpdater(model, self.rw, mh_steps)
        self.executor = RowExecutor(workers)
        K = self.config.K_fixed
        gammas, marks, _ = simulate_prior_atoms(self.rep, K, self.rng)
        self.state = ChainState(gammas=gammas, marks=marks, K=K)
        model.resize(K)

    @property
    def K(self) -> int:
        return self.config.K_fixed

    def set_atoms(self, gammas, marks) -> None:
        if len(gammas) != self.K:
            raise ConfigError("atom count must equal the truncation level")
        self.state.gammas = np.array(gammas, dtype=float)
        self.state.marks = np.array(marks, dtype=float)

    def sweep(self) -> TraceRecord:
        t0 = time.perf_counter()
        st, model, rng, K = self.state, self.model, self.rng, self.K
        st.K_prev = int(model.active_index().max()) if model.n_units else 0
        model.sample_traits(K, rng)
        gammas, marks = st.gammas.copy(), st.marks.copy()
        sub1 = self.atoms.occupied(gammas, marks, K - 1, rng)
        sub2 = self.atoms.update(gammas, marks, K, None, None, rng)
        st.gammas, st.marks = gammas, marks
        model.update_rates(gammas, marks, rng)
        uniforms = self.assign_rng.random((model.n_units, model.uniforms_per_unit(K)))
        levels = np.full(model.n_units, K, dtype=np.int64)
        model.sample_assignments(levels, gammas, marks, uniforms, 1.0, False, self.executor)
        model.update_local_truncation()
        st.iteration += 1
        if self.check:
            self.check_invariants()
        X = model.count_matrix()
        return TraceRecord(
            iteration=st.iteration, statistic=parity_of(X), K=K, K_prev=st.K_prev,
            n_active=int(np.count_nonzero(X.any(axis=0))) if X.size else 0,
            accept_sub1=_rate(sub1), accept_sub2=_rate(sub2),
            seconds=time.perf_counter() - t0)

    def run(self, iterations: int, callback=None) -> list[TraceRecord]:
        trace = []
        for _ in range(iterations):
            rec = self.sweep()
            if callback is not None:
                callback(self, rec)
            trace.append(rec)
        return trace

    def check_invariants(self) -> None:
        st = self.state
        if self.model.count_matrix().shape[1] != self.K or len(st.gammas) != self.K:
            raise InvariantViolation("column count changed under fixed truncation")
        if np.any(np.diff(st.gammas) <= 0) or st.gammas[0] <= 0:
            raise InvariantViolation("arrivals are not strictly increasing")
        self.model.check_invariants()

    def close(self):
        self.executor.close()
