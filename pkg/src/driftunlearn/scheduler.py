"""Sliding-window retraining and unlearn-then-train over a chunk stream.

Both algorithms use test-then-train: every incoming chunk is scored by the
current model before it is used for any update. Chunk indices are 0-based, so
the first window shift happens when chunk ``L`` arrives.
"""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import model
from .datastream import Chunk, stack
from .fixtures import exact_optimum
from .train import CostLedger, TrainConfig, initial_theta, train_incremental, train_scratch
from .unlearn import UnlearnConfig, unlearn_chunk

ALGORITHMS = ("sw", "uil")
WARMUP, RETRAIN, UNLEARN, ANCHOR, ORACLE, NOOP = "warmup", "retrain", "unlearn", "anchor", "oracle", "noop"


class Window:
    """Ring buffer of the ``L`` most recent chunks."""

    def __init__(self, L: int):
        if L < 1:
            raise ValueError(f"L must be >= 1, got {L}")
        self.L = L
        self._buf: deque[Chunk] = deque(maxlen=L)

    def push(self, chunk: Chunk) -> Chunk | None:
        evicted = self._buf[0] if len(self._buf) == self.L else None
        self._buf.append(chunk)
        return evicted

    @property
    def full(self) -> bool:
        return len(self._buf) == self.L

    def chunks(self) -> list[Chunk]:
        return list(self._buf)

    def indices(self) -> list[int]:
        return [c.index for c in self._buf]

    def __len__(self):
        return len(self._buf)


@dataclass
class RunConfig:
    algorithm: str = "uil"
    L: int = 5
    train: TrainConfig = field(default_factory=TrainConfig)
    unlearn: UnlearnConfig = field(default_factory=UnlearnConfig)
    anchor_period: int | None = None
    oracle_tracking: bool = False
    seed: int | None = None
    run_id: str = ""

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")
        if self.anchor_period is not None and self.anchor_period < 1:
            raise ValueError(f"anchor_period must be >= 1, got {self.anchor_period}")


@dataclass
class ChunkRecord:
    chunk: int
    accuracy: float
    loss: float
    grad_evals: int
    hvp_units: int
    wall_ns: int
    bytes: int
    param_dist: float | None = None
    retained_grad_evals: int = 0
    event: str = WARMUP


@dataclass
class RunLog:
    algorithm: str
    L: int
    records: list[ChunkRecord]
    theta: np.ndarray
    trajectory: list[np.ndarray]

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def events(self, kind: str) -> int:
        return sum(r.event == kind for r in self.records)


def _evaluate(theta, chunk: Chunk, n_classes: int) -> tuple[float, float]:
    if len(chunk) == 0:
        return 0.0, 0.0
    acc = model.accuracy(theta, chunk.X, chunk.y, n_classes)
    nll = float(model.per_sample_nll(theta, chunk.X, chunk.y, n_classes).mean())
    return acc, nll


def _record(k, acc, nll, ledger: CostLedger, t0, event, dist=None, wall_ns=None) -> ChunkRecord:
    return ChunkRecord(
        chunk=k,
        accuracy=acc,
        loss=nll,
        grad_evals=ledger.sample_grad_evals,
        hvp_units=ledger.hvp_evals,
        wall_ns=time.perf_counter_ns() - t0 if wall_ns is None else wall_ns,
        bytes=ledger.bytes_touched,
        param_dist=dist,
        retained_grad_evals=ledger.retained_grad_evals,
        event=event,
    )


def _start_theta(stream_iter, params, cfg):
    first = next(stream_iter, None)
    if first is None:
        raise ValueError("stream is empty")
    return first, initial_theta(first.X.shape[1], params.n_classes, cfg.train)


def _run(stream: Iterable[Chunk], params: model.LossParams, cfg: RunConfig, algorithm: str) -> RunLog:
    it = iter(stream)
    first, theta = _start_theta(it, params, cfg)
    window = Window(cfg.L)
    records, trajectory = [], []
    shift = 0

    def chunks():
        yield first
        yield from it

    for pos, chunk in enumerate(chunks()):
        t0 = time.perf_counter_ns()
        acc, nll = _evaluate(theta, chunk, params.n_classes)
        forget = window.push(chunk)
        if pos < cfg.L:
            theta, ledger = train_incremental(theta, chunk, params, cfg.train)
            event = WARMUP
        elif algorithm == "sw":
            theta, ledger = train_scratch(window.chunks(), params, cfg.train)
            event = RETRAIN
        else:
            shift += 1
            theta, ledger, event = uil_shift(theta, chunk, forget, window, shift, params, cfg)
        records.append(_record(chunk.index, acc, nll, ledger, t0, event))
        trajectory.append(theta.copy())
    return RunLog(algorithm, cfg.L, records, theta, trajectory)


def uil_shift(theta, chunk: Chunk, forget: Chunk, window: Window, shift: int,
              params: model.LossParams, cfg: RunConfig):
    """One UIL window advance: unlearn ``forget`` then train on ``chunk``.

    ``window`` already holds ``chunk``. Every ``anchor_period``-th shift is a
    scratch retrain instead.
    """
    if cfg.anchor_period is not None and shift % cfg.anchor_period == 0:
        theta, ledger = train_scratch(window.chunks(), params, cfg.train)
        return theta, ledger, ANCHOR
    retained = window.chunks()[:-1]
    res = unlearn_chunk(theta, forget, retained, params, cfg.unlearn, step=chunk.index)
    theta, inc = train_incremental(res.theta, chunk, params, cfg.train)
    return theta, res.ledger + inc, UNLEARN


def run_sw(stream: Iterable[Chunk], params: model.LossParams, cfg: RunConfig) -> RunLog:
    """Incremental warm-up, then reset and retrain on the window for every chunk."""
    return _run(stream, params, cfg, "sw")


def run_uil(stream: Iterable[Chunk], params: model.LossParams, cfg: RunConfig) -> RunLog:
    """Incremental warm-up, then unlearn the evicted chunk and train on the new one."""
    return _run(stream, params, cfg, "uil")


def run(stream, params, cfg: RunConfig) -> RunLog:
    return run_sw(stream, params, cfg) if cfg.algorithm == "sw" else run_uil(stream, params, cfg)


@dataclass
class TheoryTrace:
    """Per-shift distances to the perfectly retrained model.

    ``e`` has one entry per shift ``t = 0..T`` (``t = 0`` is the end of warm-up);
    ``delta``, ``eps_unlearn_hat`` and ``eps_forgetting_hat`` cover ``t = 1..T``.
    """

    e: list[float]
    delta: list[float]
    eps_unlearn_hat: list[float]
    eps_forgetting_hat: list[float]
    mu: float
    beta: float
    eta: float
    L: int
    chunk_index: list[int]
    thetas: list[np.ndarray]
    oracle_thetas: list[np.ndarray]

    @property
    def T(self) -> int:
        return len(self.e) - 1


def run_pair_with_oracle(stream: Iterable[Chunk], params: model.LossParams, cfg: RunConfig,
                         anchor_start: bool = True, noop_shifts: bool = False,
                         oracle_tol: float = 1e-8):
    """Run UIL next to an exactly retrained sliding-window oracle.

    With ``anchor_start`` the UIL model is set to the oracle at the end of
    warm-up, so ``e[0] == 0``. ``noop_shifts`` skips unlearning and training
    after warm-up (ablation: ``e`` then only reflects oracle movement).
    Returns ``(uil_log, oracle_log, trace)``.
    """
    it = iter(stream)
    first, theta = _start_theta(it, params, cfg)
    window = Window(cfg.L)
    uil_records, sw_records, traj, sw_traj = [], [], [], []
    e, delta, eps_u, eps_f, idx, thetas, othetas = [], [], [], [], [], [], []
    theta_star = theta.copy()
    shift = 0
    max_sq = 0.0

    def chunks():
        yield first
        yield from it

    for pos, chunk in enumerate(chunks()):
        if len(chunk):
            max_sq = max(max_sq, float(np.max(np.einsum("ij,ij->i", chunk.X, chunk.X))))
        t0 = time.perf_counter_ns()
        acc, nll = _evaluate(theta, chunk, params.n_classes)
        o_acc, o_nll = _evaluate(theta_star, chunk, params.n_classes)
        forget = window.push(chunk)
        X, y = stack(window.chunks())

        if pos < cfg.L:
            theta, ledger = train_incremental(theta, chunk, params, cfg.train)
            theta_star = theta.copy()
            o_ledger, event = ledger, WARMUP
            if pos == cfg.L - 1:
                ob = exact_optimum(X, y, params, tol=oracle_tol)
                theta_star = ob.theta
                o_ledger = CostLedger(sample_grad_evals=len(X) * (ob.iterations + 1))
                if anchor_start:
                    theta = theta_star.copy()
                e.append(float(np.linalg.norm(theta - theta_star)))
                idx.append(chunk.index)
                thetas.append(theta.copy())
                othetas.append(theta_star.copy())
            dist = e[-1] if pos == cfg.L - 1 else None
        else:
            shift += 1
            retained = window.chunks()[:-1]
            if noop_shifts:
                ledger, event = CostLedger(), NOOP
                u = 0.0
            else:
                if cfg.anchor_period is not None and shift % cfg.anchor_period == 0:
                    theta, ledger = train_scratch(window.chunks(), params, cfg.train)
                    event, u = ANCHOR, 0.0
                else:
                    res = unlearn_chunk(theta, forget, retained, params, cfg.unlearn, step=chunk.index)
                    if retained:
                        Xr, yr = stack(retained)
                        ret_star = exact_optimum(Xr, yr, params, tol=oracle_tol, init=theta_star).theta
                    else:
                        ret_star = np.zeros_like(theta)
                    u = float(np.linalg.norm(res.theta - ret_star))
                    theta, inc = train_incremental(res.theta, chunk, params, cfg.train)
                    ledger, event = res.ledger + inc, UNLEARN
            ob = exact_optimum(X, y, params, tol=oracle_tol, init=theta_star)
            theta_star = ob.theta
            o_ledger = CostLedger(sample_grad_evals=len(X) * (ob.iterations + 1))
            dist = float(np.linalg.norm(theta - theta_star))
            d_t = max(0.0, dist - e[-1])
            e.append(dist)
            delta.append(d_t)
            eps_u.append(u)
            eps_f.append(max(0.0, d_t - u))
            idx.append(chunk.index)
            thetas.append(theta.copy())
            othetas.append(theta_star.copy())

        # oracle work is excluded from UIL timings: wall time comes from the ledgers
        uil_records.append(_record(chunk.index, acc, nll, ledger, t0, event, dist, ledger.wall_ns))
        o_event = ORACLE if pos >= cfg.L - 1 else WARMUP
        sw_records.append(_record(chunk.index, o_acc, o_nll, o_ledger, t0, o_event, None, o_ledger.wall_ns))
        traj.append(theta.copy())
        sw_traj.append(theta_star.copy())

    trace = TheoryTrace(
        e=e, delta=delta, eps_unlearn_hat=eps_u, eps_forgetting_hat=eps_f,
        mu=params.lam, beta=params.lam + 0.5 * max_sq, eta=cfg.train.eta, L=cfg.L,
        chunk_index=idx, thetas=thetas, oracle_thetas=othetas,
    )
    uil_log = RunLog("uil", cfg.L, uil_records, theta, traj)
    sw_log = RunLog("sw-oracle", cfg.L, sw_records, theta_star, sw_traj)
    return uil_log, sw_log, trace
