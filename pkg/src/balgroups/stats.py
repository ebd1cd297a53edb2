"""Alexander-Govern test for equal means under unequal variances."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc


def chi_square_sf(x: float, df: int) -> float:
    """Upper tail P(X > x) of a chi-square variable with ``df`` degrees of freedom.

    Uses the regularized upper incomplete gamma function Q(df/2, x/2).
    """
    if x < 0:
        raise ValueError("x must be non-negative")
    if df < 1:
        raise ValueError("df must be at least 1")
    if x == 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


@dataclass(frozen=True)
class AgResult:
    statistic: float
    p_value: float
    df: int
    per_group_z: np.ndarray


def _normalize(t: float, nu: float) -> float:
    # normal approximation to a t variate with nu degrees of freedom
    a = nu - 0.5
    b = 48.0 * a * a
    c = math.sqrt(a * math.log1p(t * t / nu))
    c = math.copysign(c, t)
    c3 = c**3
    c5 = c3 * c * c
    c7 = c5 * c * c
    return (
        c
        + (c3 + 3 * c) / b
        - (4 * c7 + 33 * c5 + 240 * c3 + 855 * c) / (10 * b * b + 8 * b * c**4 + 1000 * b)
    )


def alexander_govern(groups) -> AgResult:
    """Alexander-Govern statistic and chi-square p-value.

    Parameters
    ----------
    groups : sequence of array_like
        One sample per group, each with at least two observations and
        non-zero variance.
    """
    samples = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(samples) < 2:
        raise ValueError("need at least two groups")
    for s in samples:
        if s.ndim != 1 or len(s) < 2:
            raise ValueError("every group needs at least two observations")
        if not np.isfinite(s).all():
            raise ValueError("non-finite observation")
    n = np.array([len(s) for s in samples], dtype=np.float64)
    means = np.array([s.mean() for s in samples])
    sd = np.array([s.std(ddof=1) for s in samples])
    if (sd == 0).any():
        raise ValueError("a group has zero variance")
    se = sd / np.sqrt(n)
    inv = 1.0 / se**2
    w = inv / inv.sum()
    grand = float(w @ means)
    t = (means - grand) / se
    z = np.array([_normalize(ti, ni - 1.0) for ti, ni in zip(t, n)])
    stat = float((z * z).sum())
    df = len(samples) - 1
    return AgResult(stat, chi_square_sf(stat, df), df, z)


def significance_flags(per_method: dict, alpha: float = 0.05) -> bool:
    """True when the methods' per-seed accuracies differ at level ``alpha``."""
    if len(per_method) < 2:
        raise ValueError("need at least two methods")
    res = alexander_govern(list(per_method.values()))
    return res.p_value < alpha
