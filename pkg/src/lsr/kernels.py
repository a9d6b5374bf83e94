"""Dense numeric kernels with explicit forward/backward rules.

All arrays are float64. Each kernel returns its output together with
whatever the backward pass needs; backward functions return exact analytic
gradients. `finite_diff_check` is the independent oracle used to verify
every backward rule in the tests.
"""

from __future__ import annotations

import math
from typing import Callable, Mapping

import numpy as np

from .errors import ShapeError

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def linear(X: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Y = X @ W + b, b broadcast over rows."""
    if X.shape[1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise ShapeError(
            f"linear: incompatible shapes {X.shape} @ {W.shape} + {b.shape}"
        )
    return X @ W + b


def linear_backward(dY, X, W):
    """Gradients of linear: returns (dX, dW, db)."""
    return dY @ W.T, X.T @ dY, dY.sum(axis=0)


def gelu(X: np.ndarray) -> np.ndarray:
    """Exact GeLU x * Phi(x) using the Gaussian CDF (erf form)."""
    from scipy.special import erf  # local import keeps numpy-only callers light

    return 0.5 * X * (1.0 + erf(X / _SQRT2))


def gelu_backward(dY: np.ndarray, X: np.ndarray) -> np.ndarray:
    """d/dx [x * Phi(x)] = Phi(x) + x * phi(x)."""
    from scipy.special import erf

    phi = _INV_SQRT_2PI * np.exp(-0.5 * X * X)
    cdf = 0.5 * (1.0 + erf(X / _SQRT2))
    return dY * (cdf + X * phi)


def layer_norm(X, gamma, beta, eps: float = 1e-12):
    """Per-row normalization with biased variance, then affine gamma/beta.

    Returns (Y, cache) where cache feeds layer_norm_backward.
    """
    mu = X.mean(axis=1, keepdims=True)
    var = X.var(axis=1, keepdims=True)  # biased (population) variance
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (X - mu) * inv_std
    return gamma * xhat + beta, (xhat, inv_std)


def layer_norm_backward(dY, cache, gamma):
    """Gradients of layer_norm: returns (dX, dgamma, dbeta)."""
    xhat, inv_std = cache
    dgamma = (dY * xhat).sum(axis=0)
    dbeta = dY.sum(axis=0)
    dxhat = dY * gamma
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dX = inv_std * (dxhat - m1 - xhat * m2)
    return dX, dgamma, dbeta


def finite_diff_check(
    f: Callable[[Mapping[str, np.ndarray]], float],
    params: dict[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    h: float = 1e-5,
) -> float:
    """Max relative error between analytic grads and central differences.

    `f` evaluates the scalar loss at a parameter setting; `grads` holds the
    analytic gradient being checked (same keys/shapes as `params`). The
    relative error denominator is max(1, |analytic|) per coordinate.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    worst = 0.0
    for name, value in params.items():
        g = grads[name]
        flat = value.reshape(-1)
        gflat = g.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            f_plus = f(params)
            flat[idx] = orig - h
            f_minus = f(params)
            flat[idx] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise ValueError(f"non-finite loss while perturbing {name}")
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = abs(numeric - gflat[idx]) / max(1.0, abs(gflat[idx]))
            worst = max(worst, err)
    return worst
