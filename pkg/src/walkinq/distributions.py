"""Poisson/Erlang primitives used by every waiting-time formula.

All functions are pure and operate on scalars (or, where noted, return
small numpy vectors).  Rates are per unit time; counts are nonnegative
integers.
"""

from __future__ import annotations

import math

import numpy as np


def _check_domain(t: float, mu: float) -> None:
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if mu <= 0:
        raise ValueError(f"rate must be positive, got {mu}")


def poisson_weight(t: float, i: int, mu: float) -> float:
    """Probability that exactly ``i`` service completions fit in ``t`` time.

    Equals exp(-mu*t) * (mu*t)**i / i!.
    """
    _check_domain(t, mu)
    if i < 0:
        raise ValueError(f"count must be nonnegative, got {i}")
    x = mu * t
    # forward recurrence from p0; stable for the moderate mu*t in scope
    p = math.exp(-x)
    for j in range(1, i + 1):
        p *= x / j
    return p


def poisson_pmf_vector(rate: float, n_max: int) -> np.ndarray:
    """pmf of Poisson(rate) on 0..n_max as a vector, by forward recurrence."""
    if rate < 0:
        raise ValueError(f"rate must be nonnegative, got {rate}")
    p = np.empty(n_max + 1)
    p[0] = math.exp(-rate)
    for j in range(1, n_max + 1):
        p[j] = p[j - 1] * rate / j
    return p


def erlang_cdf(t: float, n: int, mu: float) -> float:
    """cdf of an Erlang(n, mu) at ``t``: 1 - sum_{i<n} poisson_weight(t, i, mu)."""
    _check_domain(t, mu)
    if n < 1:
        raise ValueError(f"shape must be >= 1, got {n}")
    x = mu * t
    p = math.exp(-x)
    tail = p
    for j in range(1, n):
        p *= x / j
        tail += p
    return max(0.0, 1.0 - tail)


def erlang_pdf(t: float, n: int, mu: float) -> float:
    """pdf of an Erlang(n, mu) at ``t``; equals mu * poisson_weight(t, n-1, mu)."""
    _check_domain(t, mu)
    if n < 1:
        raise ValueError(f"shape must be >= 1, got {n}")
    return mu * poisson_weight(t, n - 1, mu)


def truncated_erlang_mean(t: float, n: int, mu: float) -> float:
    """Mean of an Erlang(n, mu) restricted to completions within ``t``.

    This is the integral of x * erlang_pdf(x) over [0, t].  Computed via
    the identity with the Erlang(n+1) cdf,

        (n / mu) * erlang_cdf(t, n + 1, mu),

    which avoids the factorials of the incomplete-gamma form and reuses
    the stable Poisson tail sum.  Bounded by the full mean n/mu.
    """
    _check_domain(t, mu)
    if n < 1:
        raise ValueError(f"shape must be >= 1, got {n}")
    return (n / mu) * erlang_cdf(t, n + 1, mu)


def truncation_level(lam: float, c: float) -> int:
    """Smallest k with Poisson(lam) cdf strictly above the mass threshold c."""
    if lam <= 0:
        raise ValueError(f"arrival rate must be positive, got {lam}")
    if not 0.0 < c < 1.0:
        raise ValueError(f"mass threshold must be in (0, 1), got {c}")
    p = math.exp(-lam)
    cdf = p
    k = 0
    while cdf <= c:
        k += 1
        p *= lam / k
        cdf += p
    return k
