"""Trace statistics: parity test function, batch-means ESS, scaling fits and
held-out reconstruction error."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np


def parity_statistic(X) -> int:
    """1 if ``X`` has an even number of nonzero entries, else 0."""
    return int(np.count_nonzero(np.asarray(X)) % 2 == 0)


@dataclass(frozen=True)
class EssEstimate:
    ess: float
    degenerate: bool
    batch_size: int

    def __float__(self) -> float:
        return self.ess


def ess_batch_means(values, batch_size: int | None = None) -> EssEstimate:
    """Effective sample size from the variance of non-overlapping batch means.

    ``ESS = T s^2 / (b var(batch means))`` with batch size ``b = floor(sqrt(T))``
    by default, clamped to ``[1, T]``. A constant trace has ``ESS = T`` and
    is flagged as degenerate.
    """
    x = np.asarray(values, dtype=float)
    T = len(x)
    if T < 100:
        raise ValueError("batch-means ESS needs at least 100 values")
    b = int(math.isqrt(T)) if batch_size is None else int(batch_size)
    if not 1 <= b <= T // 2:
        raise ValueError("batch size must allow at least two batches")
    s2 = x.var(ddof=1)
    if s2 == 0 or not np.isfinite(s2):
        return EssEstimate(float(T), True, b)
    n_batches = T // b
    means = x[: n_batches * b].reshape(n_batches, b).mean(axis=1)
    sigma2 = b * means.var(ddof=1)
    if sigma2 <= 0:
        return EssEstimate(float(T), False, b)
    return EssEstimate(float(np.clip(T * s2 / sigma2, 1.0, T)), False, b)


def scaling_fit(ns, ys) -> float:
    """Least-squares slope of ``log10(y)`` against ``log10(N)``."""
    ns = np.asarray(ns, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(ns) != len(ys):
        raise ValueError("ns and ys must have equal length")
    if len(np.unique(ns)) < 3:
        raise ValueError("need at least three distinct N")
    if np.any(ns <= 0) or np.any(ys <= 0):
        raise ValueError("values must be positive for a log-log fit")
    slope, _ = np.polyfit(np.log10(ns), np.log10(ys), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# Held-out reconstruction error

EXHAUSTIVE_MAX_K = 15


def _best_subset_exhaustive(Y, psi):
    K = psi.shape[0]
    combos = np.array(list(itertools.product((0, 1), repeat=K)), dtype=float)
    sums = combos @ psi
    d2 = (np.sum(Y**2, axis=1)[:, None] - 2.0 * Y @ sums.T + np.sum(sums**2, axis=1)[None, :])
    return np.sqrt(np.maximum(d2.min(axis=1), 0.0))


def _best_subset_greedy(Y, psi):
    out = np.empty(len(Y))
    for i, y in enumerate(Y):
        resid = y.copy()
        free = np.ones(psi.shape[0], dtype=bool)
        err = resid @ resid
        while free.any():
            cand = resid[None, :] - psi
            errs = np.where(free, np.sum(cand**2, axis=1), np.inf)
            j = int(np.argmin(errs))
            if errs[j] >= err:
                break
            resid, err = cand[j], errs[j]
            free[j] = False
        out[i] = math.sqrt(err)
    return out


def reconstruction_errors(Y, psi, method: str = "auto") -> np.ndarray:
    """Per-row ``min_x ||y - x psi||`` over binary ``x``."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    psi = np.asarray(psi, dtype=float).reshape(-1, Y.shape[1])
    if psi.shape[0] == 0:
        return np.linalg.norm(Y, axis=1)
    if method == "auto":
        method = "exhaustive" if psi.shape[0] <= EXHAUSTIVE_MAX_K else "greedy"
    if method == "exhaustive":
        if psi.shape[0] > 22:
            raise ValueError("exhaustive search is limited to 22 features")
        return _best_subset_exhaustive(Y, psi)
    if method == "greedy":
        return _best_subset_greedy(Y, psi)
    raise ValueError(f"unknown method {method!r}")


def heldout_l2(Y_test, psi_samples, method: str = "auto", reduce: str = "mean") -> float:
    """Mean held-out 2-norm error, per posterior feature sample then combined.

    ``reduce="mean"`` averages over samples; ``"best"`` takes the smallest.
    """
    errs = [float(reconstruction_errors(Y_test, psi, method).mean()) for psi in psi_samples]
    if not errs:
        raise ValueError("no posterior samples")
    if reduce == "mean":
        return float(np.mean(errs))
    if reduce == "best":
        return float(np.min(errs))
    raise ValueError(f"unknown reduce {reduce!r}")


# ---------------------------------------------------------------------------
# Traces

TRACE_FIELDS = ("iteration", "statistic", "K", "K_prev", "n_active", "accept_sub1", "accept_sub2")


@dataclass
class Trace:
    values: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    extras: list = field(default_factory=list)

    @classmethod
    def from_records(cls, records) -> "Trace":
        t = cls()
        for r in records:
            t.append(r)
        return t

    def append(self, rec) -> None:
        self.values.append(rec.statistic)
        self.wall_times.append(rec.seconds)
        row = {f: getattr(rec, f) for f in TRACE_FIELDS}
        row.update(rec.extra)
        self.extras.append(row)

    def __len__(self) -> int:
        return len(self.values)

    def mean_acceptance(self, which: str = "accept_sub1") -> float:
        vals = np.array([e[which] for e in self.extras], dtype=float)
        vals = vals[np.isfinite(vals)]
        return float(vals.mean()) if len(vals) else float("nan")

    def summary(self, burn_in: int = 0) -> dict:
        vals = self.values[burn_in:]
        secs = float(np.sum(self.wall_times[burn_in:]))
        out = {"iterations": len(self), "burn_in": burn_in, "seconds": secs,
               "ess": float("nan"), "ess_per_sec": float("nan"), "ess_degenerate": "",
               "accept_sub1": self.mean_acceptance("accept_sub1"),
               "accept_sub2": self.mean_acceptance("accept_sub2")}
        if len(vals) >= 100:
            est = ess_batch_means(vals)
            out["ess"] = est.ess
            out["ess_degenerate"] = int(est.degenerate)
            out["ess_per_sec"] = est.ess / secs if secs > 0 else float("nan")
        return out

    def write_csv(self, path) -> None:
        """Per-iteration diagnostics; wall-clock times are kept out so the file is reproducible."""
        keys = list(TRACE_FIELDS)
        for e in self.extras:
            keys += [k for k in e if k not in keys]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            w.writeheader()
            for e in self.extras:
                w.writerow({k: _fmt(e.get(k, "")) for k in keys})

    def write_timing_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "seconds"])
            for e, s in zip(self.extras, self.wall_times):
                w.writerow([e["iteration"], repr(float(s))])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_summary_csv(rows, path) -> None:
    rows = list(rows)
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in keys})
