"""SGD training from scratch on a window and incrementally on one chunk."""
from __future__ import annotations

import time
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from . import model
from .datastream import Chunk, keyed_rng, stack

_TAG_SCRATCH, _TAG_INCREMENTAL, _TAG_INIT = 11, 12, 13


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    eta: float = 0.05
    epochs_scratch: int = 20
    epochs_inc: int = 1
    minibatch: int = 50
    seed: int = 0
    convergence_tol: float | None = None
    init: str = "zeros"
    init_scale: float = 0.01

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"train.eta must be > 0, got {self.eta}")
        if self.epochs_scratch < 1:
            raise ValueError(f"train.epochs_scratch must be >= 1, got {self.epochs_scratch}")
        if self.epochs_inc < 0:
            raise ValueError(f"train.epochs_inc must be >= 0, got {self.epochs_inc}")
        if self.minibatch < 1:
            raise ValueError(f"train.minibatch must be >= 1, got {self.minibatch}")
        if self.init not in ("zeros", "random"):
            raise ValueError(f"train.init must be 'zeros' or 'random', got {self.init!r}")

    def check_stable(self, mu: float) -> None:
        if self.eta * mu >= 1:
            raise ValueError(f"train.eta * mu = {self.eta * mu:.3g} must be < 1")


@dataclass
class CostLedger:
    """Exact work counters.

    ``retained_grad_evals`` is the subset of ``sample_grad_evals`` spent on the
    retained-window gradient inside an unlearning step.
    """

    sample_grad_evals: int = 0
    retained_grad_evals: int = 0
    hvp_evals: int = 0
    wall_ns: int = 0
    bytes_touched: int = 0
    cg_unconverged: int = 0

    def __iadd__(self, other: "CostLedger"):
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def __add__(self, other: "CostLedger") -> "CostLedger":
        out = CostLedger(**{f.name: getattr(self, f.name) for f in fields(self)})
        out += other
        return out

    @property
    def formula_units(self) -> int:
        """Work covered by the closed-form UIL cost (retained gradient excluded)."""
        return self.sample_grad_evals - self.retained_grad_evals + self.hvp_evals


def initial_theta(d: int, n_classes: int, cfg: TrainConfig) -> np.ndarray:
    p = model.n_params(d, n_classes)
    if cfg.init == "zeros":
        return np.zeros(p)
    return cfg.init_scale * keyed_rng(cfg.seed, _TAG_INIT).standard_normal(p)


def _sgd(theta, X, y, params, cfg, epochs, rng, ledger, tol=None):
    n = len(X)
    C = params.n_classes
    theta = theta.copy()
    W = theta.reshape(-1, C)
    rows = np.arange(n)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            b = order[start:start + cfg.minibatch]
            Xb = X[b]
            R = model.softmax(Xb @ W)
            R[rows[: len(b)], y[b]] -= 1.0
            g = Xb.T @ R / len(b) + params.lam * W
            W -= cfg.eta * g
        ledger.sample_grad_evals += n
        if not np.all(np.isfinite(theta)):
            raise TrainingDiverged(f"parameters became non-finite (eta={cfg.eta})")
        if tol is not None:
            ledger.sample_grad_evals += n
            if np.linalg.norm(model.grad(theta, X, y, params)) <= tol:
                break
    return theta


def train_scratch(window: Sequence[Chunk], params: model.LossParams, cfg: TrainConfig):
    """Fresh model trained for ``cfg.epochs_scratch`` SGD epochs on the whole window.

    The shuffle generator is keyed only on ``cfg.seed``, so the result depends on
    window content and seed, not on how the window was reached.
    """
    if not window:
        raise ValueError("window is empty")
    cfg.check_stable(params.lam)
    t0 = time.perf_counter_ns()
    X, y = stack(window)
    ledger = CostLedger(bytes_touched=sum(c.nbytes for c in window))
    theta = initial_theta(X.shape[1], params.n_classes, cfg)
    rng = keyed_rng(cfg.seed, _TAG_SCRATCH)
    theta = _sgd(theta, X, y, params, cfg, cfg.epochs_scratch, rng, ledger, cfg.convergence_tol)
    ledger.wall_ns = time.perf_counter_ns() - t0
    return theta, ledger


def train_incremental(theta, chunk: Chunk, params: model.LossParams, cfg: TrainConfig):
    """Continue SGD from ``theta`` over one chunk for ``cfg.epochs_inc`` epochs."""
    cfg.check_stable(params.lam)
    t0 = time.perf_counter_ns()
    theta = np.asarray(theta, dtype=np.float64)
    ledger = CostLedger()
    if cfg.epochs_inc == 0 or len(chunk) == 0:
        return theta.copy(), ledger
    ledger.bytes_touched = chunk.nbytes
    rng = keyed_rng(cfg.seed, _TAG_INCREMENTAL, chunk.index)
    theta = _sgd(theta, chunk.X, chunk.y, params, cfg, cfg.epochs_inc, rng, ledger)
    ledger.wall_ns = time.perf_counter_ns() - t0
    return theta, ledger


def _positive(**kwargs):
    for name, value in kwargs.items():
        if value < 1:
            raise ValueError(f"{name} must be positive, got {value}")


def predicted_cost_sw(L: int, m: int, E_ret: int, p: int) -> int:
    _positive(L=L, m=m, E_ret=E_ret, p=p)
    return L * m * E_ret * p


def predicted_cost_uil(m: int, E_inc: int, k: int, i: int, p: int) -> int:
    _positive(m=m, E_inc=E_inc, k=k, i=i, p=p)
    return ((1 + E_inc) * m + k * i) * p
