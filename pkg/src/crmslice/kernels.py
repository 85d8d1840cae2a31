"""Clamped random-walk Metropolis-Hastings kernels for marks and arrivals.

Each proposal centers a uniform window of half-width ``delta`` at the current
value clamped away from the support boundary, so the window never leaves the
support. When the clamp binds the proposal is asymmetric; the returned
log-ratio ``log q(current | proposal) - log q(proposal | current)`` is then
``-inf`` exactly when the reverse move is impossible and ``0`` otherwise.
Proposals are vectorized over array inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .errors import ConfigError, InvariantViolation


@dataclass(frozen=True)
class RwConfig:
    n_gamma: int = 10
    delta_v: float = 0.3
    # False reproduces the uncorrected clamped proposal
    hastings: bool = True

    def __post_init__(self):
        if self.n_gamma < 1:
            raise ConfigError("n_gamma must be >= 1")
        if not 0 < self.delta_v < 0.5:
            raise ConfigError("delta_v must lie in (0, 0.5)")


@dataclass
class MhOutcome:
    value: Any
    accepted: bool
    log_alpha: float
    log_target: float


def _window_log_ratio(current, center_rev, delta):
    if isinstance(current, float) and isinstance(center_rev, float):
        return 0.0 if abs(current - center_rev) <= delta * (1 + 1e-12) else -math.inf
    ok = np.abs(np.asarray(current) - center_rev) <= delta * (1 + 1e-12)
    out = np.where(ok, 0.0, -np.inf)
    return out if out.ndim else float(out)


def propose_gamma_bounded(current, lower, upper, n_gamma: int, rng: np.random.Generator):
    """Propose inside ``[lower, upper]`` with step ``(upper - lower) / n_gamma``."""
    if n_gamma < 2:
        raise ConfigError("bounded arrival proposals need n_gamma >= 2")
    if np.ndim(current) == 0 and np.ndim(lower) == 0 and np.ndim(upper) == 0:
        lower, upper, current = float(lower), float(upper), float(current)
        delta = (upper - lower) / n_gamma
        center = max(min(current, upper - delta), lower + delta)
        prop = center + rng.uniform(-1.0, 1.0) * delta
        rev = max(min(prop, upper - delta), lower + delta)
        return prop, _window_log_ratio(current, rev, delta)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    delta = (upper - lower) / n_gamma
    center = np.maximum(np.minimum(current, upper - delta), lower + delta)
    prop = center + rng.uniform(-1.0, 1.0, size=np.shape(center)) * delta
    rev = np.maximum(np.minimum(prop, upper - delta), lower + delta)
    return _scalar(prop), _window_log_ratio(current, rev, delta)


def propose_gamma_tail(current, lower, n_gamma: int, rng: np.random.Generator):
    """Lower-clamped proposal with fixed step ``1 / n_gamma``."""
    delta = 1.0 / n_gamma
    center = np.maximum(current, np.asarray(lower, dtype=float) + delta)
    prop = center + rng.uniform(-1.0, 1.0, size=np.shape(center)) * delta
    rev = np.maximum(prop, np.asarray(lower, dtype=float) + delta)
    return _scalar(prop), _window_log_ratio(current, rev, delta)


def propose_v(current, delta_v: float, rng: np.random.Generator):
    """Two-sided clamped proposal on (0, 1)."""
    center = np.maximum(np.minimum(current, 1.0 - delta_v), delta_v)
    prop = center + rng.uniform(-1.0, 1.0, size=np.shape(center)) * delta_v
    rev = np.maximum(np.minimum(prop, 1.0 - delta_v), delta_v)
    return _scalar(prop), _window_log_ratio(current, rev, delta_v)


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def mh_step(log_target: Callable[[Any], float], current, propose: Callable,
            rng: np.random.Generator, current_logp: float | None = None,
            hastings: bool = True) -> MhOutcome:
    """One Metropolis-Hastings transition.

    ``propose(current, rng)`` returns ``(proposal, log_q_ratio)``.
    """
    lp0 = log_target(current) if current_logp is None else current_logp
    if not np.isfinite(lp0):
        raise InvariantViolation(f"target is {lp0} at the current state {current!r}")
    prop, log_q = propose(current, rng)
    if hastings and log_q == -math.inf:
        return MhOutcome(current, False, -math.inf, lp0)
    lp1 = log_target(prop)
    log_alpha = lp1 - lp0 + (log_q if hastings else 0.0)
    if log_alpha >= 0 or math.log(rng.uniform()) < log_alpha:
        return MhOutcome(prop, True, min(log_alpha, 0.0), lp1)
    return MhOutcome(current, False, log_alpha, lp0)
