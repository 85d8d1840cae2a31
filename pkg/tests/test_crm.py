import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crmslice.crm import (MARK_MAX, BondessonBetaRep, bondesson_tau, extend_arrivals,
                          simulate_prior_atoms, slice_level, xi)


def test_xi_values():
    assert xi(0) == 1.0
    assert xi(2, 1.0) == pytest.approx(math.exp(-2))
    assert xi(3, 3.0) == pytest.approx(math.exp(-1))
    np.testing.assert_allclose(xi(np.arange(3), 2.0), np.exp(-np.arange(3) / 2.0))


def test_xi_rejects_nonpositive_scale():
    with pytest.raises(ValueError):
        xi(1, 0.0)


def test_slice_level_examples():
    assert slice_level(1.0) == 0
    assert slice_level(0.5) == 0
    assert slice_level(math.exp(-2)) == 2
    assert slice_level(math.exp(-2) * 1.0001) == 1
    assert slice_level(math.exp(-2), 3.0) == 6


@given(st.floats(min_value=1e-300, max_value=1.0), st.floats(min_value=0.1, max_value=10.0))
def test_slice_level_brackets_u(u, dx):
    k = slice_level(u, dx)
    assert k >= 0
    assert xi(k, dx) >= u
    assert xi(k + 1, dx) < u


def test_slice_level_rejects_out_of_range():
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            slice_level(bad)


def test_tau_is_mark_times_decay():
    assert bondesson_tau(0.5, 2.0, 4.0) == pytest.approx(0.5 * math.exp(-0.5))
    rep = BondessonBetaRep(alpha=2.0, lam=1.5)
    assert rep.c == 3.0
    assert rep.tau(1.0, 3.0) == pytest.approx(math.exp(-1))


def test_total_mass_mean_is_alpha():
    # E[sum_k V_k exp(-Gamma_k / c)] = E[V] c = alpha
    rng = np.random.default_rng(1)
    for alpha, lam in [(1.0, 1.0), (2.0, 1.5), (1.0, 3.0)]:
        rep = BondessonBetaRep(alpha, lam)
        n_atoms = int(rep.tail_bound_gamma(1e-14)) + 50
        totals = np.array([simulate_prior_atoms(rep, n_atoms, rng)[2].sum() for _ in range(4000)])
        se = totals.std(ddof=1) / math.sqrt(len(totals))
        assert abs(totals.mean() - alpha) < 4 * se


def test_marks_never_reach_one():
    rep = BondessonBetaRep(1.0, 1.0 + 1e-7)
    v = rep.sample_mark(np.random.default_rng(0), size=10_000)
    assert v.max() <= MARK_MAX < 1.0
    assert rep.mark_from_uniform(1.0) == MARK_MAX
    assert np.isfinite(rep.mark_logdensity(v)).all()


def test_degenerate_marks():
    rep = BondessonBetaRep(2.0, 1.0)
    assert rep.degenerate
    assert np.all(rep.sample_mark(np.random.default_rng(0), size=5) == 1.0)
    assert rep.mark_logdensity(0.3) == 0.0


def test_mark_density_matches_beta():
    from scipy import stats
    rep = BondessonBetaRep(1.0, 2.5)
    v = np.linspace(0.05, 0.95, 7)
    np.testing.assert_allclose(rep.mark_logdensity(v), stats.beta.logpdf(v, 1.0, 1.5))
    assert rep.mark_logdensity(1.0) == -np.inf
    assert rep.mark_logdensity(0.0) == -np.inf


def test_mark_inverse_cdf():
    rep = BondessonBetaRep(1.0, 3.0)
    w = np.linspace(0.01, 0.99, 9)
    from scipy import stats
    np.testing.assert_allclose(rep.mark_from_uniform(w), stats.beta.ppf(w, 1.0, 2.0))


def test_invalid_parameters():
    with pytest.raises(ValueError):
        BondessonBetaRep(alpha=0.0)
    with pytest.raises(ValueError):
        BondessonBetaRep(lam=0.5)
    with pytest.raises(ValueError):
        simulate_prior_atoms(BondessonBetaRep(), -1, np.random.default_rng(0))


def test_arrivals_increasing_and_extendable():
    rng = np.random.default_rng(3)
    g, v, w = simulate_prior_atoms(BondessonBetaRep(1.0, 2.0), 50, rng)
    assert np.all(np.diff(g) > 0) and g[0] > 0
    g2 = extend_arrivals(g, 10, rng)
    assert len(g2) == 60 and np.all(np.diff(g2) > 0)
    np.testing.assert_array_equal(g2[:50], g)
    assert len(extend_arrivals(np.zeros(0), 3, rng)) == 3


def test_arrival_spacings_are_unit_exponential():
    from scipy import stats
    g, _, _ = simulate_prior_atoms(BondessonBetaRep(), 20_000, np.random.default_rng(4))
    gaps = np.diff(np.concatenate([[0.0], g]))
    assert stats.kstest(gaps, "expon").pvalue > 1e-3
