from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftunlearn import model
from driftunlearn.fixtures import fixture_names, fixture_series
from driftunlearn.metrics import (
    RecoveryConfig, deterioration, prequential_accuracy, recovery_time, resource_summary, smooth,
)

from conftest import stationary_chunks


def rec(acc=0.0, chunk=0, wall_ns=0, bytes=0, grad_evals=0, hvp_units=0):
    return SimpleNamespace(accuracy=acc, chunk=chunk, wall_ns=wall_ns, bytes=bytes,
                           grad_evals=grad_evals, hvp_units=hvp_units)


def test_prequential_basic():
    assert prequential_accuracy([rec(1.0)] * 4)[1] == 1.0
    assert prequential_accuracy([rec(float(i % 2)) for i in range(10)])[1] == 0.5
    with pytest.raises(ValueError):
        prequential_accuracy([])


def test_prequential_matches_raw_prediction_recount():
    chunks = stationary_chunks(m=37, n_chunks=5)
    theta = np.random.default_rng(0).standard_normal(30)
    log = [rec(model.accuracy(theta, c.X, c.y, 3)) for c in chunks]
    correct = sum(int(np.sum(np.argmax(c.X @ theta.reshape(10, 3), axis=1) == c.y)) for c in chunks)
    total = sum(len(c) for c in chunks)
    assert prequential_accuracy(log)[1] == pytest.approx(correct / total, abs=1e-12)


@pytest.mark.parametrize("name", fixture_names())
def test_fixture_series_answers(name):
    fx = fixture_series(name)
    cfg = RecoveryConfig(fx.baseline_window, fx.epsilon, fx.smoothing)
    assert recovery_time(fx.series, fx.drift_chunk, cfg) == fx.recovery
    dmax, davg = deterioration(fx.series, fx.drift_chunk, cfg)
    assert dmax == pytest.approx(fx.det_max, abs=1e-9)
    assert davg == pytest.approx(fx.det_avg, abs=1e-9)


def test_dip1_single_dip_arithmetic():
    fx = fixture_series("dip1")
    cfg = RecoveryConfig(fx.baseline_window, fx.epsilon, fx.smoothing)
    assert deterioration(fx.series, fx.drift_chunk, cfg)[0] == pytest.approx(50.0)


def _brute_force(series, drift, cfg):
    base = sum(series[drift - cfg.baseline_window:drift]) / cfg.baseline_window
    thr = (1 - cfg.epsilon) * base
    post = list(series[drift:])
    rec_t = None
    for t in range(len(post)):
        window = post[max(0, t - cfg.smoothing + 1):t + 1]
        if sum(window) / len(window) >= thr:
            rec_t = t
            break
    span = post if rec_t is None else post[:rec_t + 1]
    deficits = [max(0.0, (base - a) / base) for a in span]
    return rec_t, 100 * max(deficits), 100 * sum(deficits) / len(deficits)


acc_values = st.floats(0.05, 1.0, allow_nan=False)


@given(pre=st.lists(acc_values, min_size=3, max_size=8), post=st.lists(acc_values, min_size=1, max_size=15),
       eps=st.floats(0.01, 0.5), width=st.integers(1, 4))
@settings(max_examples=200, deadline=None)
def test_metrics_match_brute_force(pre, post, eps, width):
    series = pre + post
    cfg = RecoveryConfig(len(pre), eps, width)
    r, dmax, davg = _brute_force(series, len(pre), cfg)
    assert recovery_time(series, len(pre), cfg) == r
    got = deterioration(series, len(pre), cfg)
    assert got[0] == pytest.approx(dmax, abs=1e-9) and got[1] == pytest.approx(davg, abs=1e-9)
    assert got[0] >= got[1] >= 0


@given(pre=st.lists(acc_values, min_size=3, max_size=6), post=st.lists(acc_values, min_size=1, max_size=12),
       e1=st.floats(0.01, 0.9), e2=st.floats(0.01, 0.9))
@settings(max_examples=200, deadline=None)
def test_recovery_monotone_in_epsilon(pre, post, e1, e2):
    lo, hi = sorted((e1, e2))
    series = pre + post
    r_lo = recovery_time(series, len(pre), RecoveryConfig(len(pre), lo, 3))
    r_hi = recovery_time(series, len(pre), RecoveryConfig(len(pre), hi, 3))
    if r_lo is not None:
        assert r_hi is not None and r_hi <= r_lo


def test_recovery_preconditions():
    cfg = RecoveryConfig(5, 0.05, 3)
    with pytest.raises(ValueError):
        recovery_time([0.9] * 10, 3, cfg)  # fewer than 5 pre-drift chunks
    with pytest.raises(ValueError):
        recovery_time([0.9] * 10, 10, cfg)
    for bad in ((5, 0.0, 3), (5, 1.0, 3), (0, 0.05, 3), (5, 0.05, 0)):
        with pytest.raises(ValueError):
            RecoveryConfig(*bad)


def test_smooth_is_trailing_mean():
    np.testing.assert_allclose(smooth([1, 2, 3, 4], 2), [1, 1.5, 2.5, 3.5])
    np.testing.assert_allclose(smooth([1, 2, 3], 1), [1, 2, 3])


def test_resource_summary_means_and_sums():
    log = [rec(wall_ns=1_000_000_000, bytes=2**20, grad_evals=5, hvp_units=1, chunk=0),
           rec(wall_ns=3_000_000_000, bytes=3 * 2**20, grad_evals=7, hvp_units=2, chunk=1)]
    s = resource_summary(log)
    assert (s.s_per_chunk, s.mb_per_chunk, s.grad_evals, s.hvp_units) == (2.0, 2.0, 12, 3)
    assert resource_summary(log, start_chunk=1).grad_evals == 7
    with pytest.raises(ValueError):
        resource_summary([])
