"""Small statistics helpers for summaries and ordering checks."""

from __future__ import annotations

import numpy as np
from scipy import stats as sps


def mean_ci95(xs) -> tuple:
    """Sample mean and 95% CI half-width (Student t). Width 0 for n <= 1."""
    xs = np.asarray(xs, dtype=np.float64)
    n = xs.size
    if n == 0:
        raise ValueError("mean_ci95 needs at least one value")
    mean = float(np.mean(xs))
    if n == 1:
        return mean, 0.0
    half = float(sps.t.ppf(0.975, n - 1) * np.std(xs, ddof=1) / np.sqrt(n))
    return mean, half


def paired_greater(a, b, level: float = 0.95) -> dict:
    """One-sided paired t-test that mean(a - b) > 0.

    Returns the t statistic, the critical value at ``level`` and whether the
    difference is significant.
    """
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    n = d.size
    if n < 2:
        raise ValueError("paired test needs at least two pairs")
    sd = np.std(d, ddof=1)
    if sd == 0.0:
        t_stat = np.inf if np.mean(d) > 0 else -np.inf
    else:
        t_stat = float(np.mean(d) / (sd / np.sqrt(n)))
    t_crit = float(sps.t.ppf(level, n - 1))
    return {"t": t_stat, "t_crit": t_crit, "significant": bool(t_stat > t_crit), "mean_diff": float(np.mean(d))}
