"""Shared empirical-quantile convention.

Tail selection and intercept-only quantile fits must agree on the same
order-statistic rule, so it lives here once: the level-``tau`` quantile of a
sample of size ``T`` is the ``k``-th smallest observation with
``k = ceil(tau * T)`` (lower endpoint of the minimizer interval of the check
loss).
"""

from __future__ import annotations

import math

import numpy as np

# Absorbs float fuzz in tau * T (e.g. 0.07 * 100 == 7.000000000000001) so the
# ceiling does not jump one rank too high.
CEIL_FUZZ = 1e-9


def order_statistic_rank(tau: float, n: int) -> int:
    """1-indexed rank of the type-1 empirical ``tau``-quantile in a sample of ``n``."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie strictly inside (0, 1), got {tau}")
    if n < 1:
        raise ValueError("empty sample has no quantiles")
    k = math.ceil(tau * n - CEIL_FUZZ)
    return min(max(k, 1), n)


def empirical_quantile(values: np.ndarray, tau: float) -> float:
    """Type-1 (lower order statistic) empirical quantile."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError("values must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError("values must be finite")
    k = order_statistic_rank(tau, arr.size)
    return float(np.sort(arr)[k - 1])
