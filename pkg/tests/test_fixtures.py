import numpy as np
import pytest

from driftunlearn import model
from driftunlearn.fixtures import OracleDidNotConverge, exact_optimum, fixture_names, fixture_series
from driftunlearn.model import LossParams

from conftest import random_problem


def test_zero_features_give_zero_optimum():
    X = np.zeros((20, 4))
    y = np.arange(20) % 3
    ob = exact_optimum(X, y, LossParams(0.1, 3))
    assert np.all(ob.theta == 0) and ob.grad_norm <= 1e-8


def test_optimum_grad_norm_and_hessian():
    _, X, y, params = random_problem(0)
    ob = exact_optimum(X, y, params, with_hessian=True)
    assert ob.grad_norm <= 1e-8
    assert np.linalg.norm(model.grad(ob.theta, X, y, params)) <= 1e-8
    np.testing.assert_allclose(ob.hessian, model.hessian_dense(ob.theta, X, y, params))


def test_restarts_converge_to_same_optimum():
    _, X, y, params = random_problem(1)
    rng = np.random.default_rng(0)
    base = exact_optimum(X, y, params).theta
    for _ in range(3):
        other = exact_optimum(X, y, params, init=3 * rng.standard_normal(base.size)).theta
        assert np.linalg.norm(other - base) <= 1e-6


def test_random_perturbations_never_lower_the_loss():
    _, X, y, params = random_problem(2)
    star = exact_optimum(X, y, params).theta
    f = model.loss(star, X, y, params)
    rng = np.random.default_rng(1)
    for scale in np.geomspace(1e-4, 1.0, 100):
        assert model.loss(star + scale * rng.standard_normal(star.size), X, y, params) >= f


def test_idempotent_from_optimum():
    _, X, y, params = random_problem(3)
    star = exact_optimum(X, y, params).theta
    again = exact_optimum(X, y, params, init=star)
    assert again.iterations == 0 and np.array_equal(again.theta, star)


def test_iteration_cap():
    _, X, y, params = random_problem(4)
    with pytest.raises(OracleDidNotConverge):
        exact_optimum(X, y, params, max_iter=2)


def test_fixture_catalogue():
    assert {"flat09", "dip5", "never"} <= set(fixture_names())
    assert fixture_series("flat09").recovery == 0
    assert fixture_series("dip5").recovery == 5
    assert fixture_series("never").recovery is None
    assert fixture_series("flat09").det_max == fixture_series("flat09").det_avg == 0
    with pytest.raises(KeyError):
        fixture_series("nope")
