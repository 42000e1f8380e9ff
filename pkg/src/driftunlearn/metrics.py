"""Prequential accuracy, recovery analysis and resource summaries of run logs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

NOT_RECOVERED = None


@dataclass
class RecoveryConfig:
    baseline_window: int = 5
    epsilon: float = 0.05
    smoothing: int = 3

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError(f"recovery.epsilon must be in (0, 1), got {self.epsilon}")
        if self.baseline_window < 1 or self.smoothing < 1:
            raise ValueError("recovery.baseline_window and recovery.smoothing must be >= 1")


def prequential_accuracy(log) -> tuple[list[float], float]:
    if not log:
        raise ValueError("empty run log")
    acc = [r.accuracy for r in log]
    return acc, float(np.mean(acc))


def smooth(series, width: int) -> np.ndarray:
    """Trailing moving average; the first points average what is available."""
    a = np.asarray(series, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(a)])
    idx = np.arange(len(a))
    lo = np.maximum(0, idx - width + 1)
    return (c[idx + 1] - c[lo]) / (idx + 1 - lo)


def _baseline(series, drift_chunk, cfg):
    if not 0 < drift_chunk < len(series):
        raise ValueError(f"drift_chunk {drift_chunk} outside series of length {len(series)}")
    if drift_chunk < cfg.baseline_window:
        raise ValueError(
            f"need {cfg.baseline_window} pre-drift chunks for the baseline, have {drift_chunk}"
        )
    return float(np.mean(series[drift_chunk - cfg.baseline_window:drift_chunk]))


def recovery_time(series: Sequence[float], drift_chunk: int, cfg: RecoveryConfig) -> int | None:
    """Chunks after drift until smoothed accuracy is back to ``(1-eps)*baseline``.

    Smoothing runs over the post-drift segment only, so pre-drift chunks never
    mask the drop. Returns ``None`` when the threshold is never met.
    """
    series = np.asarray(series, dtype=np.float64)
    threshold = (1 - cfg.epsilon) * _baseline(series, drift_chunk, cfg)
    sm = smooth(series[drift_chunk:], cfg.smoothing)
    hits = np.nonzero(sm >= threshold)[0]
    return int(hits[0]) if len(hits) else NOT_RECOVERED


def deterioration(series: Sequence[float], drift_chunk: int, cfg: RecoveryConfig) -> tuple[float, float]:
    """(max %, mean %) relative accuracy loss over the drift-to-recovery span."""
    series = np.asarray(series, dtype=np.float64)
    base = _baseline(series, drift_chunk, cfg)
    rec = recovery_time(series, drift_chunk, cfg)
    end = len(series) if rec is None else drift_chunk + rec + 1
    span = series[drift_chunk:end]
    if base <= 0:
        return 0.0, 0.0
    deficit = np.clip((base - span) / base, 0.0, None)
    return float(100 * deficit.max()), float(100 * deficit.mean())


@dataclass
class ResourceSummary:
    s_per_chunk: float
    mb_per_chunk: float
    grad_evals: int
    hvp_units: int


def resource_summary(log, start_chunk: int = 0) -> ResourceSummary:
    """Means of wall time and data volume, totals of work counters.

    Only records with ``chunk >= start_chunk`` are included.
    """
    rows = [r for r in log if r.chunk >= start_chunk]
    if not rows:
        raise ValueError("empty run log")
    return ResourceSummary(
        s_per_chunk=float(np.mean([r.wall_ns for r in rows])) / 1e9,
        mb_per_chunk=float(np.mean([r.bytes for r in rows])) / 2**20,
        grad_evals=int(sum(r.grad_evals for r in rows)),
        hvp_units=int(sum(r.hvp_units for r in rows)),
    )
