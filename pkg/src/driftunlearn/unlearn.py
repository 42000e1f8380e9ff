"""Single Newton-step removal of a chunk's influence.

The step moves the parameters to the minimiser of the retained-data objective
(one damped Newton iteration). The gradient is exact over the retained window;
the curvature comes from a seeded ``k``-subsample of it and is inverted by one of
three backends: a dense solve, truncated conjugate gradient, or a diagonal
empirical Fisher approximation.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import model
from .datastream import Chunk, keyed_rng, stack
from .train import CostLedger

BACKENDS = ("newton-exact", "newton-cg", "diag-fisher")
_TAG_SUBSAMPLE = 21


class CGWarning(RuntimeWarning):
    pass


@dataclass
class UnlearnConfig:
    backend: str = "newton-cg"
    k: int = 256
    i: int = 20
    cg_tol: float = 1e-8
    damping: float | None = None  # None -> 1e-3 * lam
    seed: int = 0

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unlearn.backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.k < 1:
            raise ValueError(f"unlearn.k must be >= 1, got {self.k}")
        if self.i < 1:
            raise ValueError(f"unlearn.i must be >= 1, got {self.i}")
        if not self.cg_tol > 0:
            raise ValueError(f"unlearn.cg_tol must be > 0, got {self.cg_tol}")
        if self.damping is not None and self.damping < 0:
            raise ValueError(f"unlearn.damping must be >= 0, got {self.damping}")

    def damping_for(self, lam: float) -> float:
        return 1e-3 * lam if self.damping is None else self.damping


class CGResult(NamedTuple):
    x: np.ndarray
    iterations: int
    converged: bool
    residual: float


class UnlearnResult(NamedTuple):
    theta: np.ndarray
    ledger: CostLedger
    converged: bool
    forget_grad_norm: float


def conjugate_gradient(matvec: Callable[[np.ndarray], np.ndarray], b, tol: float, maxiter: int) -> CGResult:
    """Solve ``A x = b`` for SPD ``A``; stops at ``||r|| <= tol * ||b||``."""
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return CGResult(x, 0, True, 0.0)
    r = b.copy()
    d = r.copy()
    rr = r @ r
    target = tol * bnorm
    it = 0
    while it < maxiter:
        Ad = matvec(d)
        alpha = rr / (d @ Ad)
        x += alpha * d
        r -= alpha * Ad
        it += 1
        rr_new = r @ r
        if np.sqrt(rr_new) <= target:
            return CGResult(x, it, True, float(np.sqrt(rr_new)))
        d = r + (rr_new / rr) * d
        rr = rr_new
    return CGResult(x, it, False, float(np.sqrt(rr)))


def inverse_hvp_cg(theta, X, y, v, params: model.LossParams, cfg: UnlearnConfig) -> CGResult:
    """Approximate ``(H + damping I)^{-1} v`` with Hessian products on ``(X, y)``."""
    damping = cfg.damping_for(params.lam)
    res = conjugate_gradient(
        lambda u: model.hvp(theta, X, y, u, params) + damping * u, v, cfg.cg_tol, cfg.i
    )
    if not res.converged:
        warnings.warn(
            f"CG stopped after {res.iterations} iterations with residual {res.residual:.3g}",
            CGWarning,
            stacklevel=2,
        )
    return res


def diag_fisher_inverse(theta, X, y, v, params: model.LossParams, damping: float = 0.0) -> np.ndarray:
    """``v_j / (F_jj + lam + damping)`` with ``F`` the diagonal empirical Fisher."""
    G = model.per_sample_grads(theta, X, y, params.n_classes)
    F = np.mean(G * G, axis=0)
    return np.asarray(v, dtype=np.float64) / (F + params.lam + damping)


def curvature_subsample(n: int, k: int, seed: int, step: int) -> np.ndarray:
    if k >= n:
        return np.arange(n)
    return np.sort(keyed_rng(seed, _TAG_SUBSAMPLE, step).choice(n, size=k, replace=False))


def unlearn_chunk(
    theta,
    forget: Chunk,
    retained: Sequence[Chunk],
    params: model.LossParams,
    cfg: UnlearnConfig,
    step: int = 0,
) -> UnlearnResult:
    """Remove ``forget`` by one Newton step toward the optimum on ``retained``.

    ``step`` keys the curvature subsample so repeated calls are reproducible.
    With an empty ``retained`` the objective collapses to the ridge term.
    """
    t0 = time.perf_counter_ns()
    theta = np.asarray(theta, dtype=np.float64)
    p = theta.size
    damping = cfg.damping_for(params.lam)
    if not params.lam + damping > 0:
        raise ValueError("lam + damping must be positive")
    ledger = CostLedger()
    converged = True

    forget_norm = 0.0
    if len(forget):
        forget_norm = float(np.linalg.norm(model.data_grad(theta, forget.X, forget.y, params.n_classes)))
        ledger.sample_grad_evals += len(forget)
        ledger.bytes_touched += forget.nbytes

    if not retained:
        g = params.lam * theta
        step_vec = g / (params.lam + damping)
    else:
        X, y = stack(retained)
        g = model.grad(theta, X, y, params)
        ledger.sample_grad_evals += len(X)
        ledger.retained_grad_evals += len(X)
        ledger.bytes_touched += sum(c.nbytes for c in retained)

        idx = curvature_subsample(len(X), cfg.k, cfg.seed, step)
        Xk, yk = X[idx], y[idx]
        k_eff = len(idx)
        if cfg.backend == "newton-exact":
            H = model.hessian_dense(theta, Xk, yk, params, cap=max(p, model.HESSIAN_DENSE_CAP))
            H[np.diag_indices(p)] += damping
            step_vec = np.linalg.solve(H, g)
            ledger.hvp_evals += k_eff * p
        elif cfg.backend == "newton-cg":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", CGWarning)
                res = inverse_hvp_cg(theta, Xk, yk, g, params, cfg)
            step_vec = res.x
            converged = res.converged
            ledger.hvp_evals += k_eff * res.iterations
            ledger.cg_unconverged += int(not res.converged)
        else:
            step_vec = diag_fisher_inverse(theta, Xk, yk, g, params, damping)
            ledger.hvp_evals += k_eff

    new_theta = theta - step_vec
    ledger.wall_ns = time.perf_counter_ns() - t0
    return UnlearnResult(new_theta, ledger, converged, forget_norm)
