# cavity/numerics.py
"""Log-domain combinatorics shared by the thermodynamic modules."""
import math

import numpy as np
from scipy.special import gammaln, logsumexp

__all__ = ["log_binom", "log_falling", "log_factorial", "log_factorial_floor", "logsumexp"]


def log_falling(n, m: int) -> float:
    """ln n(n-1)...(n-m+1), accurate for astronomically large n."""
    m = int(m)
    if m < 0 or m > n:
        return -math.inf
    if m == 0:
        return 0.0
    i = np.arange(m, dtype=float)
    return m * math.log(n) + float(np.sum(np.log1p(-i / float(n))))


def log_binom(n, m: int) -> float:
    m = int(m)
    if m < 0 or m > n:
        return -math.inf
    return log_falling(n, m) - float(gammaln(m + 1))


def log_factorial(m):
    return gammaln(np.asarray(m, dtype=float) + 1.0)


def log_factorial_floor(m):
    """ln m! with m! = 1 for every m <= 1 (negative arguments included)."""
    m = np.asarray(m, dtype=float)
    return np.where(m > 1, gammaln(np.maximum(m, 1.0) + 1.0), 0.0)


def log_binom_array(n, m):
    n = np.asarray(n, dtype=float)
    m = np.asarray(m, dtype=float)
    ok = (m >= 0) & (m <= n)
    safe_m = np.where(ok, m, 0.0)
    safe_n = np.where(ok, n, 0.0)
    value = gammaln(safe_n + 1) - gammaln(safe_m + 1) - gammaln(safe_n - safe_m + 1)
    return np.where(ok, value, -np.inf)
