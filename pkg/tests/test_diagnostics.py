import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crmslice.diagnostics import (Trace, ess_batch_means, heldout_l2, parity_statistic,
                                  reconstruction_errors, scaling_fit, write_summary_csv)
from crmslice.engine import TraceRecord


def test_parity_examples():
    assert parity_statistic(np.zeros((2, 3))) == 1
    assert parity_statistic(np.array([[0, 1], [0, 0]])) == 0
    assert parity_statistic(np.array([[1, 1], [0, 0]])) == 1
    assert parity_statistic(np.array([[2, 0], [0, 0]])) == 0


def test_ess_iid_bernoulli():
    x = np.random.default_rng(0).integers(0, 2, 100_000)
    assert 0.8 <= ess_batch_means(x).ess / len(x) <= 1.2


def test_ess_ar1():
    rng = np.random.default_rng(1)
    rho, T = 0.9, 100_000
    e = rng.normal(size=T)
    x = np.empty(T)
    x[0] = e[0] / math.sqrt(1 - rho**2)
    for t in range(1, T):
        x[t] = rho * x[t - 1] + e[t]
    ratio = ess_batch_means(x).ess / T
    target = (1 - rho) / (1 + rho)
    assert target / 1.5 <= ratio <= target * 1.5


def test_ess_constant_trace_flagged():
    est = ess_batch_means(np.ones(400))
    assert est.degenerate and est.ess == 400 and float(est) == 400


def test_ess_batch_size_and_errors():
    assert ess_batch_means(np.arange(10_000.0) % 7).batch_size == 100
    with pytest.raises(ValueError):
        ess_batch_means(np.ones(50))
    with pytest.raises(ValueError):
        ess_batch_means(np.arange(200.0), batch_size=150)


@given(st.floats(-100, 100).filter(lambda a: abs(a) > 1e-3), st.floats(-100, 100))
def test_ess_affine_invariance(a, b):
    x = np.random.default_rng(2).normal(size=400).cumsum()
    assert ess_batch_means(a * x + b).ess == pytest.approx(ess_batch_means(x).ess, rel=1e-6)


def test_scaling_fit_slopes():
    ns = np.array([500, 1000, 2000, 4000])
    assert scaling_fit(ns, ns ** -0.6) == pytest.approx(-0.6)
    assert scaling_fit(ns, 7.0 / ns) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        scaling_fit([1, 1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        scaling_fit([1, 2, 3], [1, 0, 3])


def test_heldout_without_features_is_norm():
    Y = np.array([[3.0, 4.0], [0.0, 1.0]])
    np.testing.assert_allclose(reconstruction_errors(Y, np.zeros((0, 2))), [5.0, 1.0])
    assert heldout_l2(Y, [np.zeros((0, 2))]) == pytest.approx(3.0)


def test_heldout_with_exact_feature():
    rng = np.random.default_rng(3)
    y = rng.normal(size=(1, 4))
    psi = np.vstack([rng.normal(size=(3, 4)), y])
    assert reconstruction_errors(y, psi)[0] < 1e-12


def test_heldout_reductions():
    Y = np.array([[1.0, 0.0]])
    samples = [np.array([[1.0, 0.0]]), np.zeros((0, 2))]
    assert heldout_l2(Y, samples) == pytest.approx(0.5)
    assert heldout_l2(Y, samples, reduce="best") == pytest.approx(0.0)
    with pytest.raises(ValueError):
        heldout_l2(Y, [])
    with pytest.raises(ValueError):
        heldout_l2(Y, samples, reduce="median")


def test_greedy_matches_exhaustive_on_orthogonal_features():
    rng = np.random.default_rng(4)
    psi = np.eye(6)[:5] * rng.uniform(0.5, 2.0, size=(5, 1))
    Y = rng.normal(size=(50, 6)) + rng.integers(0, 2, (50, 5)) @ psi
    np.testing.assert_allclose(reconstruction_errors(Y, psi, "greedy"),
                               reconstruction_errors(Y, psi, "exhaustive"))


@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_greedy_never_beats_exhaustive(seed, K):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=(K, 3))
    Y = rng.normal(size=(5, 3))
    assert np.all(reconstruction_errors(Y, psi, "greedy")
                  >= reconstruction_errors(Y, psi, "exhaustive") - 1e-9)


def test_reconstruction_method_errors():
    with pytest.raises(ValueError):
        reconstruction_errors(np.zeros((1, 2)), np.zeros((23, 2)), "exhaustive")
    with pytest.raises(ValueError):
        reconstruction_errors(np.zeros((1, 2)), np.zeros((2, 2)), "other")


def _record(i, stat, secs=0.01):
    return TraceRecord(iteration=i, statistic=stat, K=3, K_prev=2, n_active=2, accept_sub1=0.5,
                       accept_sub2=float("nan"), seconds=secs)


def test_trace_summary_and_csv(tmp_path):
    rng = np.random.default_rng(5)
    t = Trace.from_records(_record(i + 1, int(rng.integers(0, 2))) for i in range(300))
    s = t.summary(burn_in=100)
    assert s["seconds"] == pytest.approx(2.0)
    assert s["ess_per_sec"] == pytest.approx(s["ess"] / 2.0)
    assert s["accept_sub1"] == 0.5 and math.isnan(s["accept_sub2"])
    short = Trace.from_records(_record(i + 1, 0) for i in range(50)).summary()
    assert math.isnan(short["ess"])
    t.write_csv(tmp_path / "trace.csv")
    t.write_timing_csv(tmp_path / "timing.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0].startswith("iteration,statistic,K,K_prev")
    assert len(lines) == 301 and "seconds" not in lines[0]
    assert (tmp_path / "timing.csv").read_text().splitlines()[0] == "iteration,seconds"
    write_summary_csv([{"a": 1.5, "b": "x"}, {"c": 2}], tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines() == ["a,b,c", "1.5,x,", ",,2"]
