import pytest
from hypothesis import given
from hypothesis import strategies as st

from driftunlearn import theory
from driftunlearn.scheduler import TheoryTrace

from conftest import random_problem


def make_trace(e, eps_u=None, eps_f=None, L=3, eta=0.1, mu=1.0):
    delta = theory.delta_series(e)
    T = len(e) - 1
    return TheoryTrace(e=list(e), delta=delta,
                       eps_unlearn_hat=list(eps_u if eps_u is not None else [0.0] * T),
                       eps_forgetting_hat=list(eps_f if eps_f is not None else [0.0] * T),
                       mu=mu, beta=2.0, eta=eta, L=L, chunk_index=list(range(len(e))),
                       thetas=[], oracle_thetas=[])


def test_accumulation_hand_built_equality():
    rep = theory.accumulation_check(make_trace([0, 0.1, 0.2, 0.3]))
    assert rep.holds and rep.e_L == pytest.approx(0.3) and rep.bound == pytest.approx(0.3)
    assert rep.slack == pytest.approx(0.0, abs=1e-15)


def test_accumulation_zero_deltas():
    rep = theory.accumulation_check(make_trace([0.0] * 6, L=5))
    assert rep.holds and rep.e_L == 0 and rep.bound == 0


def test_accumulation_needs_enough_shifts():
    with pytest.raises(ValueError):
        theory.accumulation_check(make_trace([0, 0.1]), L=3)


def test_accumulation_with_offset_start():
    rep = theory.accumulation_check(make_trace([0.5, 0.2, 0.4, 0.3, 0.6]), L=3, start=1)
    assert rep.e_start == 0.2 and rep.delta_max == pytest.approx(0.3) and rep.holds


@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=2, max_size=30))
def test_telescoping_identity(e):
    d = theory.delta_series(e)
    for t in range(1, len(e)):
        assert e[t] <= e[0] + sum(d[:t]) + 1e-9
    assert all(x >= 0 for x in d)
    rep = theory.accumulation_check(make_trace(e, L=len(e) - 1), L=len(e) - 1)
    assert rep.holds


def test_loss_gap_bound_arithmetic():
    assert theory.loss_gap_bound(2.1, 5, 0.02) == pytest.approx(0.0105)


def test_loss_gap_identical_models_zero_gap():
    theta, X, y, params = random_problem(0, n=500)
    rep = theory.loss_gap_check(theta, theta, 2.0, 5, 0.0, X, y, params)
    assert rep.gap == 0 and rep.gap_se == 0 and rep.bound == 0 and rep.holds


def test_loss_gap_uses_paired_samples():
    theta, X, y, params = random_problem(1, n=2000)
    rep = theory.loss_gap_check(theta + 0.01, theta, 2.0, 5, 0.02, X, y, params)
    assert rep.n_eval == 2000
    assert rep.gap == pytest.approx(rep.loss_uil - rep.loss_oracle, abs=1e-12)


def test_e_infinity_examples():
    assert theory.e_infinity(0.1, 1.0, 0.01, 0.001) == pytest.approx(0.1)
    assert theory.e_infinity(0.1, 1.0, 0.0, 0.0) == 0
    assert theory.e_infinity(1.0 - 1e-12, 1.0, 0.3, 0.07) == pytest.approx(0.07, abs=1e-9)
    for bad in ((1.0, 1.0), (0.0, 1.0), (2.0, 1.0)):
        with pytest.raises(ValueError):
            theory.e_infinity(*bad, 0.1, 0.1)


@given(st.floats(0.001, 0.999), st.floats(0, 5), st.floats(0, 5))
def test_e_infinity_is_fixed_point(q, eu, ef):
    e = theory.e_infinity(q, 1.0, eu, ef)
    assert theory.stability_recursion(e, q, 1.0, eu, ef) == pytest.approx(e, rel=1e-9, abs=1e-12)


def test_stability_arithmetic_and_noiseless():
    rep = theory.stability_check(make_trace([0.2, 0.25], eps_u=[0.01], eps_f=[0.001]), eta=0.1, mu=1.0)
    assert rep.lhs[0] == pytest.approx(0.02) and rep.rhs[0] == pytest.approx(0.01) and rep.stable == [True]
    clean = theory.stability_check(make_trace([0.0, 0.1, 0.0, 0.3]))
    assert clean.fraction_stable == 1.0


def test_stability_requires_estimates():
    tr = make_trace([0, 0.1, 0.2])
    tr.eps_unlearn_hat = []
    with pytest.raises(ValueError):
        theory.stability_check(tr)


def test_format_report_flattens_dataclasses():
    rep = theory.accumulation_check(make_trace([0, 0.1, 0.2, 0.3]))
    text = theory.format_report({"accumulation": rep, "run": {"L": 3, "series": [1, 2]}})
    assert "accumulation.holds = True" in text and "run.L = 3" in text and "series" not in text
