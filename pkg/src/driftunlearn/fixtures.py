"""Slow, independent oracles for tests and instrumented runs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model

MAX_ITER = 1_000_000


class OracleDidNotConverge(RuntimeError):
    pass


@dataclass
class OracleBundle:
    theta: np.ndarray
    grad_norm: float
    iterations: int
    hessian: np.ndarray | None = None


def exact_optimum(X, y, params: model.LossParams, tol: float = 1e-8, init=None,
                  with_hessian: bool = False, max_iter: int = MAX_ITER) -> OracleBundle:
    """Full-batch gradient descent with Armijo backtracking to ``||grad|| <= tol``."""
    X = np.asarray(X, dtype=np.float64)
    p = X.shape[1] * params.n_classes
    # 1/beta always descends; near the optimum Armijo is below float resolution
    min_step = 1.0 / model.convexity_constants(X, params)[1]
    theta = np.zeros(p) if init is None else np.array(init, dtype=np.float64)
    f = model.loss(theta, X, y, params)
    g = model.grad(theta, X, y, params)
    step = 1.0
    it = 0
    while np.linalg.norm(g) > tol:
        if it >= max_iter:
            raise OracleDidNotConverge(f"gradient norm {np.linalg.norm(g):.3g} after {it} iterations")
        gg = g @ g
        while True:
            cand = theta - step * g
            fc = model.loss(cand, X, y, params)
            if fc <= f - 0.5 * step * gg or step <= min_step:
                break
            step = max(0.5 * step, min_step)
        theta, f = cand, fc
        g = model.grad(theta, X, y, params)
        step *= 2.0
        it += 1
    H = model.hessian_dense(theta, X, y, params, cap=p) if with_hessian else None
    return OracleBundle(theta, float(np.linalg.norm(g)), it, H)


@dataclass(frozen=True)
class SeriesFixture:
    name: str
    series: tuple[float, ...]
    drift_chunk: int
    epsilon: float
    smoothing: int
    baseline_window: int
    recovery: int | None
    det_max: float
    det_avg: float
    notes: str = field(default="", compare=False)


_PRE = (0.9,) * 10

_FIXTURES = {
    # no drop at all
    "flat09": SeriesFixture("flat09", _PRE + (0.9,) * 10, 10, 0.05, 3, 10, 0, 0.0, 0.0),
    # drop to 0.3 at drift; post-drift trailing 3-means are .3 .4 .5 .7 .8333 .9,
    # so .855 is first reached at offset 5; raw deficits over offsets 0..5: 2/3, 4/9, 2/9, 0, 0, 0
    "dip5": SeriesFixture(
        "dip5",
        _PRE + (0.3, 0.5, 0.7, 0.9, 0.9, 0.9, 0.9, 0.9),
        10, 0.05, 3, 10, 5,
        100 * 0.6 / 0.9,
        100 * (0.6 + 0.4 + 0.2) / 0.9 / 6,
    ),
    # plateaus at 0.5 for good; span runs to the end of the series (10 points)
    "never": SeriesFixture(
        "never", _PRE + (0.5,) * 10, 10, 0.05, 3, 10, None,
        100 * 0.4 / 0.9, 100 * 0.4 / 0.9,
    ),
    # baseline 0.8, single dip to 0.4, no smoothing
    "dip1": SeriesFixture("dip1", (0.8,) * 5 + (0.4, 0.8, 0.8), 5, 0.05, 1, 5, 1, 50.0, 25.0),
}


def fixture_series(name: str) -> SeriesFixture:
    try:
        return _FIXTURES[name]
    except KeyError:
        raise KeyError(f"unknown fixture series {name!r}; known: {sorted(_FIXTURES)}") from None


def fixture_names() -> list[str]:
    return sorted(_FIXTURES)
