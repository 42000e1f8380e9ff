"""L2-regularised multinomial logistic regression on a flat parameter vector.

Parameters are stored as a flat vector of length ``p = d * C`` which is the
row-major flattening of a ``(d, C)`` weight matrix. There is no bias term, so
the ridge penalty covers every coordinate and the strong-convexity constant is
exactly ``lam``.

All data arguments are a pair ``(X, y)`` with ``X`` of shape ``(n, d)`` and
integer labels ``y`` of shape ``(n,)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HESSIAN_DENSE_CAP = 200


@dataclass(frozen=True)
class LossParams:
    lam: float
    n_classes: int

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")


def n_params(d: int, n_classes: int) -> int:
    return d * n_classes


def _weights(theta: np.ndarray, d: int, n_classes: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (d * n_classes,):
        raise ValueError(
            f"theta has shape {theta.shape}, expected ({d * n_classes},) for d={d}, C={n_classes}"
        )
    return theta.reshape(d, n_classes)


def _check_data(X, y, n_classes):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got shape {X.shape}")
    if len(X) == 0:
        raise ValueError("empty data")
    if y.shape != (len(X),):
        raise ValueError(f"labels have shape {y.shape}, expected ({len(X)},)")
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return X, y


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba(theta, X, n_classes: int) -> np.ndarray:
    """Class probabilities for every row of ``X`` (or a single vector)."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    W = _weights(theta, X2.shape[1], n_classes)
    P = softmax(X2 @ W)
    return P[0] if single else P


def predict(theta, x, n_classes: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("predict takes a single feature vector")
    if len(theta) != len(x) * n_classes:
        raise ValueError(f"feature dimension {len(x)} does not match theta of length {len(theta)}")
    return predict_proba(theta, x, n_classes)


def per_sample_nll(theta, X, y, n_classes: int) -> np.ndarray:
    X, y = _check_data(X, y, n_classes)
    W = _weights(theta, X.shape[1], n_classes)
    S = X @ W
    S = S - S.max(axis=1, keepdims=True)
    logZ = np.log(np.exp(S).sum(axis=1))
    return logZ - S[np.arange(len(y)), y]


def loss(theta, X, y, params: LossParams) -> float:
    """Mean cross-entropy plus ``lam/2 * ||theta||^2``."""
    theta = np.asarray(theta, dtype=np.float64)
    nll = per_sample_nll(theta, X, y, params.n_classes)
    return float(nll.mean() + 0.5 * params.lam * theta @ theta)


def _residual(theta, X, y, n_classes):
    W = _weights(theta, X.shape[1], n_classes)
    R = softmax(X @ W)
    R[np.arange(len(y)), y] -= 1.0
    return R


def grad(theta, X, y, params: LossParams) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    X, y = _check_data(X, y, params.n_classes)
    R = _residual(theta, X, y, params.n_classes)
    return (X.T @ R).ravel() / len(X) + params.lam * theta


def data_grad(theta, X, y, n_classes: int) -> np.ndarray:
    """Mean cross-entropy gradient without the ridge term."""
    X, y = _check_data(X, y, n_classes)
    R = _residual(theta, X, y, n_classes)
    return (X.T @ R).ravel() / len(X)


def per_sample_grads(theta, X, y, n_classes: int) -> np.ndarray:
    """Cross-entropy gradient of every sample, shape ``(n, p)``; no ridge."""
    X, y = _check_data(X, y, n_classes)
    R = _residual(theta, X, y, n_classes)
    return (X[:, :, None] * R[:, None, :]).reshape(len(X), -1)


def hvp(theta, X, y, v, params: LossParams) -> np.ndarray:
    """Exact Hessian of :func:`loss` times ``v`` without forming the Hessian."""
    X, y = _check_data(X, y, params.n_classes)
    d, C = X.shape[1], params.n_classes
    W = _weights(theta, d, C)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (d * C,):
        raise ValueError(f"v has shape {v.shape}, expected ({d * C},)")
    P = softmax(X @ W)
    S = X @ v.reshape(d, C)
    PS = P * S
    R = PS - P * PS.sum(axis=1, keepdims=True)
    return (X.T @ R).ravel() / len(X) + params.lam * v


def hessian_dense(theta, X, y, params: LossParams, cap: int = HESSIAN_DENSE_CAP) -> np.ndarray:
    """Dense ``p x p`` Hessian; only for small ``p`` (oracle use)."""
    X, y = _check_data(X, y, params.n_classes)
    d, C = X.shape[1], params.n_classes
    p = d * C
    if p > cap:
        raise ValueError(f"p={p} exceeds the dense Hessian cap {cap}")
    P = softmax(X @ _weights(theta, d, C))
    # per-sample block A_i = diag(p_i) - p_i p_i^T; H = mean_i kron(x_i x_i^T, A_i)
    A = np.einsum("nc,ce->nce", P, np.eye(C)) - P[:, :, None] * P[:, None, :]
    H = np.einsum("ni,nj,nce->icje", X, X, A).reshape(p, p) / len(X)
    H = 0.5 * (H + H.T)
    H[np.diag_indices(p)] += params.lam
    return H


def convexity_constants(X, params: LossParams) -> tuple[float, float]:
    """Strong-convexity and smoothness constants ``(mu, beta)`` of the loss on ``X``.

    ``beta`` uses the spectral bound ``lambda_max(diag(p) - p p^T) <= 1/2``.
    """
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("empty data")
    mu = params.lam
    beta = params.lam + 0.5 * float(np.max(np.einsum("ij,ij->i", X, X)))
    return mu, beta


def accuracy(theta, X, y, n_classes: int) -> float:
    P = predict_proba(theta, X, n_classes)
    return float(np.mean(P.argmax(axis=1) == np.asarray(y)))
