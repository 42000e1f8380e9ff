"""Checks of the error-accumulation, loss-gap and stability claims on traces."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import model
from .scheduler import TheoryTrace


@dataclass
class AccumulationReport:
    L: int
    start: int
    e_start: float
    e_L: float
    delta_max: float
    bound: float
    slack: float
    holds: bool


@dataclass
class LossGapReport:
    loss_uil: float
    loss_oracle: float
    gap: float
    gap_se: float
    bound: float
    beta: float
    L: int
    delta_max: float
    n_eval: int
    holds: bool


@dataclass
class StabilityReport:
    lhs: list[float]
    rhs: list[float]
    stable: list[bool]
    fraction_stable: float
    eta: float
    mu: float
    e_inf_hat: float | None = None
    extra: dict = field(default_factory=dict)


def delta_series(e) -> list[float]:
    e = np.asarray(e, dtype=np.float64)
    return [float(x) for x in np.maximum(0.0, np.diff(e))]


def accumulation_check(trace: TheoryTrace, L: int | None = None, start: int = 0,
                       atol: float = 1e-9) -> AccumulationReport:
    """``e_{start+L} <= e_start + L * max(delta)`` over the ``L`` shifts after ``start``.

    With ``start=0`` on an anchored trace ``e_start`` is 0 and this is the plain
    ``e_L <= L * delta`` accumulation bound.
    """
    L = trace.L if L is None else L
    if trace.T < start + L:
        raise ValueError(f"trace covers {trace.T} shifts, need at least {start + L}")
    e0 = float(trace.e[start])
    e_L = float(trace.e[start + L])
    dmax = float(max(trace.delta[start:start + L])) if L else 0.0
    bound = e0 + L * dmax
    return AccumulationReport(L, start, e0, e_L, dmax, bound, bound - e_L, e_L <= bound + atol)


def loss_gap_bound(beta: float, L: int, delta_max: float, e0: float = 0.0) -> float:
    return 0.5 * beta * (e0 + L * delta_max) ** 2


def loss_gap_check(theta_L, theta_star_L, beta: float, L: int, delta_max: float,
                   X_eval, y_eval, params: model.LossParams, n_se: float = 3.0,
                   e0: float = 0.0) -> LossGapReport:
    """Held-out loss gap of UIL vs. the retrained oracle against ``beta/2 (L delta)^2``.

    The gap is estimated per sample (paired), and ``n_se`` standard errors are
    allowed as statistical slack. ``e0`` is the distance at drift onset (0 for
    an anchored start).
    """
    theta_L = np.asarray(theta_L, dtype=np.float64)
    theta_star_L = np.asarray(theta_star_L, dtype=np.float64)
    a = model.per_sample_nll(theta_L, X_eval, y_eval, params.n_classes) + 0.5 * params.lam * theta_L @ theta_L
    b = model.per_sample_nll(theta_star_L, X_eval, y_eval, params.n_classes) + 0.5 * params.lam * theta_star_L @ theta_star_L
    diff = a - b
    n = len(diff)
    gap = float(diff.mean())
    se = float(diff.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    bound = loss_gap_bound(beta, L, delta_max, e0)
    return LossGapReport(float(a.mean()), float(b.mean()), gap, se, bound, beta, L, delta_max, n,
                          gap <= bound + n_se * se)


def e_infinity(eta: float, mu: float, eps_unlearn: float, eps_forgetting: float) -> float:
    """Fixed point of ``e <- (1 - eta mu)(e + eps_unlearn) + eps_forgetting``."""
    q = eta * mu
    if not 0 < q < 1:
        raise ValueError(f"eta * mu = {q} must lie in (0, 1)")
    return ((1 - q) * eps_unlearn + eps_forgetting) / q


def stability_recursion(e: float, eta: float, mu: float, eps_unlearn: float, eps_forgetting: float) -> float:
    return (1 - eta * mu) * (e + eps_unlearn) + eps_forgetting


def stability_check(trace: TheoryTrace, eta: float | None = None, mu: float | None = None,
                    start: int = 0) -> StabilityReport:
    """Per shift: is ``eta mu e_{t-1} >= (1 - eta mu) eps_u(t) + eps_f(t)``?

    ``start`` skips the first shifts (burn-in); steps are ``t = start+1..T``.
    """
    eta = trace.eta if eta is None else eta
    mu = trace.mu if mu is None else mu
    if len(trace.eps_unlearn_hat) != trace.T or len(trace.eps_forgetting_hat) != trace.T:
        raise ValueError("trace is missing the unlearning/forgetting estimates")
    q = eta * mu
    lhs, rhs = [], []
    for t in range(start + 1, trace.T + 1):
        lhs.append(q * trace.e[t - 1])
        rhs.append((1 - q) * trace.eps_unlearn_hat[t - 1] + trace.eps_forgetting_hat[t - 1])
    stable = [l >= r for l, r in zip(lhs, rhs)]
    frac = float(np.mean(stable)) if stable else 1.0
    eu = trace.eps_unlearn_hat[start:]
    ef = trace.eps_forgetting_hat[start:]
    e_inf = e_infinity(eta, mu, float(np.mean(eu)), float(np.mean(ef))) if eu and 0 < q < 1 else None
    return StabilityReport(lhs, rhs, stable, frac, eta, mu, e_inf)


def format_report(sections: dict[str, object]) -> str:
    """Flatten report dataclasses into sorted ``section.key = value`` lines."""
    lines = []
    for name, rep in sections.items():
        items = asdict(rep) if hasattr(rep, "__dataclass_fields__") else dict(rep)
        for key, value in items.items():
            if isinstance(value, list):
                continue
            if isinstance(value, float):
                value = f"{value:.10g}"
            lines.append(f"{name}.{key} = {value}")
    return "\n".join(lines) + "\n"
