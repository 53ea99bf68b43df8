"""Small numerical kernels shared by the estimators.

Normal and chi-square tail probabilities, a Cholesky solver for symmetric
positive-definite systems, and a central-difference gradient used to check
analytic derivatives.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

Z_95 = 1.959963984540054

_SQRT2 = math.sqrt(2.0)


class NotPositiveDefiniteError(ValueError):
    """Raised when a Cholesky factorization breaks down."""


def std_normal_cdf(x: float) -> float:
    """Standard normal distribution function.

    Uses the complementary error function on the tail side so that both
    halves keep full relative precision. Arguments beyond +-8 clamp to 1/0.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"std_normal_cdf needs a finite argument, got {x!r}")
    if x > 8.0:
        return 1.0
    if x < -8.0:
        return 0.0
    if x < 0.0:
        return 0.5 * math.erfc(-x / _SQRT2)
    return 1.0 - 0.5 * math.erfc(x / _SQRT2)


def std_normal_sf(x: float) -> float:
    """Upper tail ``1 - Phi(x)`` without cancellation."""
    return std_normal_cdf(-x)


def normal_quantile(p: float) -> float:
    """Inverse of :func:`std_normal_cdf` on (0, 1) by bisection."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p!r}")
    if p == 0.975:
        return Z_95
    lo, hi = -8.5, 8.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if std_normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


def critical_value(level: float) -> float:
    """Two-sided normal critical value for a confidence ``level``."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must lie in (0, 1), got {level!r}")
    return normal_quantile(1.0 - (1.0 - level) / 2.0)


def two_sided_p(z: float) -> float:
    return min(1.0, 2.0 * std_normal_sf(abs(z)))


def chi_square_sf_1df(x: float) -> float:
    """Survival function of a chi-square variable with one degree of freedom."""
    x = float(x)
    if not x >= 0.0:
        raise ValueError(f"chi-square statistic must be non-negative, got {x!r}")
    if math.isinf(x):
        return 0.0
    return math.erfc(math.sqrt(x / 2.0))


def chi_square_sf(x: float, df: int) -> float:
    """Chi-square survival function for a positive integer ``df``.

    Closed forms of the regularized upper incomplete gamma function at
    integer and half-integer shape.
    """
    if df < 1 or int(df) != df:
        raise ValueError(f"degrees of freedom must be a positive integer, got {df!r}")
    x = float(x)
    if not x >= 0.0:
        raise ValueError(f"chi-square statistic must be non-negative, got {x!r}")
    if math.isinf(x):
        return 0.0
    half = x / 2.0
    if df % 2 == 0:
        term = math.exp(-half)
        total = term
        for i in range(1, df // 2):
            term *= half / i
            total += term
        return min(1.0, total)
    total = chi_square_sf_1df(x)
    if df == 1:
        return total
    # Q(k/2, x/2) = erfc(sqrt(x/2)) + exp(-x/2) * sum_{i=1}^{(k-1)/2} (x/2)^(i-1/2) / Gamma(i+1/2)
    term = math.sqrt(half) * math.exp(-half) / math.gamma(1.5)
    acc = term
    for i in range(2, (df - 1) // 2 + 1):
        term *= half / (i - 0.5)
        acc += term
    return min(1.0, total + acc)


def cholesky(a) -> np.ndarray:
    """Lower-triangular factor ``L`` with ``L @ L.T == a``."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefiniteError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a)))) if n else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-12 * scale:
        raise NotPositiveDefiniteError("matrix is not symmetric")
    L = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > 1e-13 * scale:
            raise NotPositiveDefiniteError(
                f"matrix is not positive definite (pivot {j} = {pivot:.3g})"
            )
        L[j, j] = math.sqrt(pivot)
        L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def _forward(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    y = np.empty_like(b)
    for i in range(L.shape[0]):
        y[i] = (b[i] - L[i, :i] @ y[:i]) / L[i, i]
    return y


def _backward(L: np.ndarray, y: np.ndarray) -> np.ndarray:
    n = L.shape[0]
    x = np.empty_like(y)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - L[i + 1:, i] @ x[i + 1:]) / L[i, i]
    return x


def solve_spd(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive-definite ``a``.

    ``b`` may be a vector or a matrix of right-hand sides. Raises
    :class:`NotPositiveDefiniteError` when the factorization fails.
    """
    L = cholesky(a)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != L.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix is {L.shape[0]}x{L.shape[0]}, rhs has {b.shape[0]} rows"
        )
    return _backward(L, _forward(L, b))


def inverse_spd(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    inv = solve_spd(a, np.eye(a.shape[0]))
    return 0.5 * (inv + inv.T)


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function ``f`` at ``x``."""
    if not h > 0:
        raise ValueError("step h must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        hi, lo = f(x + e), f(x - e)
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise ValueError(f"non-finite function value near coordinate {i}")
        grad[i] = (hi - lo) / (2.0 * h)
    return grad
