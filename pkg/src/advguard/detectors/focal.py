"""Focal loss with analytic gradient and hessian with respect to the logit."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError


def _g1(p, q, gamma):
    # d/dz of -(1-p)^gamma * log(p) for the y=1 branch, with q = 1 - p
    return gamma * p * np.power(q, gamma) * np.log(p) - np.power(q, gamma + 1.0)


def _h1(p, q, gamma):
    # second derivative of the y=1 branch
    logp = np.log(p)
    return gamma * p * np.power(q, gamma) * (q * logp - gamma * p * logp + q) + (
        gamma + 1.0
    ) * p * np.power(q, gamma + 1.0)


def focal_loss(p, y, gamma: float = 2.0):
    """Focal loss value, gradient, and hessian w.r.t. the logit z (p = sigmoid(z)).

    FL = -(1 - p_t)^gamma * log(p_t) with p_t = p for y=1 and 1-p for y=0.
    gamma = 0 reduces to binary cross-entropy. Probabilities must lie inside
    (0, 1); the confident-correct boundary (p_t = 1) is admitted with loss,
    gradient, and hessian all exactly 0, while the singular boundary
    (p_t = 0) is rejected.
    """
    if gamma < 0:
        raise DomainError(f"gamma must be >= 0, got {gamma}")
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y)
    scalar = p.ndim == 0 and y.ndim == 0
    p, y = np.atleast_1d(p), np.atleast_1d(y)
    p, y = np.broadcast_arrays(p, y)
    if not np.isin(np.unique(y), (0, 1)).all():
        raise DomainError("labels must be 0 or 1")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise DomainError("probabilities must lie in [0, 1]")
    pos = y == 1
    if np.any(p[pos] == 0.0) or np.any(p[~pos] == 1.0):
        raise DomainError("focal loss is singular when p_t = 0")

    q = 1.0 - p
    loss = np.empty_like(p)
    grad = np.empty_like(p)
    hess = np.empty_like(p)
    pp, qq = p[pos], q[pos]
    loss[pos] = -np.power(qq, gamma) * np.log(pp)
    grad[pos] = _g1(pp, qq, gamma)
    hess[pos] = _h1(pp, qq, gamma)
    pn, qn = p[~pos], q[~pos]
    # y=0 mirrors the y=1 branch under p -> 1-p, z -> -z
    loss[~pos] = -np.power(pn, gamma) * np.log(qn)
    grad[~pos] = -_g1(qn, pn, gamma)
    hess[~pos] = _h1(qn, pn, gamma)
    loss += 0.0  # normalize -0.0 at the exact-correct boundary
    if scalar:
        return float(loss[0]), float(grad[0]), float(hess[0])
    return loss, grad, hess
