"""Exact statistical primitives behind the smoothing certificates.

Gaussian CDF/quantile plus the binomial interval and test machinery.  The
quantile and the Clopper-Pearson bound are computed by bisection on exact
tail evaluations rather than through a stats library, so the certificate
soundness rests only on the accuracy of ``math.erfc`` and plain float
arithmetic.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "std_normal_cdf",
    "std_normal_quantile",
    "clopper_pearson_lower",
    "binom_two_sided_pvalue",
]

_SQRT2 = math.sqrt(2.0)


def std_normal_cdf(x: float) -> float:
    """Standard normal CDF, accurate to well below 1e-12 absolute error."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"std_normal_cdf requires a finite argument, got {x!r}")
    return 0.5 * math.erfc(-x / _SQRT2)


def std_normal_quantile(p: float) -> float:
    """Inverse standard normal CDF by bisection on ``std_normal_cdf``.

    Raises ValueError for p outside the open interval (0, 1); the quantile
    is infinite at the endpoints and callers must clamp upstream.
    """
    p = float(p)
    if not (0.0 < p < 1.0) or math.isnan(p):
        raise ValueError(f"std_normal_quantile requires 0 < p < 1, got {p!r}")
    lo, hi = -50.0, 50.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if std_normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _log_binom_coeff(n: int, i: int) -> float:
    # canonical argument order: exact symmetry log C(n, i) == log C(n, n-i)
    a, b = min(i, n - i), max(i, n - i)
    return math.lgamma(n + 1) - math.lgamma(a + 1) - math.lgamma(b + 1)


def _log_pmf_terms(indices, n: int, p0: float) -> list[float]:
    lp, lq = math.log(p0), math.log1p(-p0)
    out = []
    for i in indices:
        out.append(_log_binom_coeff(n, i) + (i * lp + (n - i) * lq))
    return out


def clopper_pearson_lower(successes: int, trials: int, alpha: float) -> float:
    """One-sided exact (Clopper-Pearson) lower confidence bound.

    Returns L with P[Binomial(trials, L) >= successes] = alpha, found by
    bisection on the exact binomial upper tail to absolute tolerance 1e-13.
    The returned value sits on the conservative side of the root, so the
    bound stays valid.
    """
    successes = int(successes)
    trials = int(trials)
    alpha = float(alpha)
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes must lie in [0, {trials}], got {successes}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    if successes == 0:
        return 0.0

    k, n = successes, trials
    # evaluate whichever tail has fewer terms; complement costs at most ~1e-16
    if (n - k + 1) <= k:
        idx = np.arange(k, n + 1)
        direct_upper = True
    else:
        idx = np.arange(0, k)
        direct_upper = False
    log_coeff = np.array([_log_binom_coeff(n, int(i)) for i in idx])

    def upper_tail(p: float) -> float:
        if p <= 0.0:
            return 0.0
        if p >= 1.0:
            return 1.0
        log_pmf = log_coeff + idx * math.log(p) + (n - idx) * math.log1p(-p)
        s = float(np.exp(log_pmf).sum())
        return s if direct_upper else 1.0 - s

    lo, hi = 0.0, 1.0
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if upper_tail(mid) < alpha:
            lo = mid
        else:
            hi = mid
    return lo


def binom_two_sided_pvalue(successes: int, trials: int, p0: float) -> float:
    """Exact two-sided binomial p-value: min(1, 2*min(P[X<=k], P[X>=k])).

    Both tails are summed with ``math.fsum`` over exactly computed per-term
    probabilities, which makes the p0=0.5 symmetry pvalue(k) == pvalue(n-k)
    hold bit for bit.
    """
    successes = int(successes)
    trials = int(trials)
    p0 = float(p0)
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes must lie in [0, {trials}], got {successes}")
    if not 0.0 <= p0 <= 1.0 or math.isnan(p0):
        raise ValueError(f"p0 must lie in [0, 1], got {p0!r}")

    k, n = successes, trials
    if p0 == 0.0:
        lower, upper = 1.0, (1.0 if k == 0 else 0.0)
    elif p0 == 1.0:
        lower, upper = (1.0 if k == n else 0.0), 1.0
    else:
        lower = math.fsum(
            math.exp(t) for t in _log_pmf_terms(range(0, k + 1), n, p0)
        )
        upper = math.fsum(
            math.exp(t) for t in _log_pmf_terms(range(k, n + 1), n, p0)
        )
    return min(1.0, 2.0 * min(lower, upper))
