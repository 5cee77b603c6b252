"""Probabilistic exponent counter with base beta = 2 ** (2 ** -delta).

The stored exponent C is 0 before the first increment.  The first increment
moves C to 1 and then behaves like every later one: C grows by one with
probability beta ** -C.  Under this convention beta ** C has mean
(beta - 1) * n + beta after n >= 1 increments, and the estimator
(beta ** C - beta) / (beta - 1) is unbiased (and exactly 0 at n = 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def beta_for(delta: float) -> float:
    if delta < 0:
        raise ValueError("delta must be non-negative")
    return 2.0 ** (2.0 ** -delta)


@dataclass(frozen=True)
class FlajoletCounter:
    delta: float
    C: int = 0

    @property
    def beta(self) -> float:
        return beta_for(self.delta)

    def increment(self, rng) -> "FlajoletCounter":
        """One increment; consumes exactly one uniform draw from ``rng``."""
        u = rng.random()
        c = self.C if self.C > 0 else 1
        if u < self.beta ** -c:
            c += 1
        return FlajoletCounter(self.delta, c)

    def estimate(self) -> float:
        if self.C == 0:
            return 0.0
        b = self.beta
        return max(0.0, (b ** self.C - b) / (b - 1))


def counter_new(delta: float) -> FlajoletCounter:
    beta_for(delta)
    return FlajoletCounter(delta, 0)


def counter_increment(c: FlajoletCounter, rng) -> FlajoletCounter:
    return c.increment(rng)


def counter_estimate(c: FlajoletCounter) -> float:
    return c.estimate()


def estimate_from_exponent(C, delta: float):
    """Vectorised estimator over an array of exponents."""
    b = beta_for(delta)
    C = np.asarray(C)
    est = (np.power(b, C.astype(float)) - b) / (b - 1)
    return np.where(C == 0, 0.0, np.maximum(est, 0.0))


def simulate_counts(n: int, delta: float, trials: int, rng) -> np.ndarray:
    """Exponents of ``trials`` independent counters after ``n`` increments each.

    Same transition law as ``FlajoletCounter.increment``, but draws are taken
    one increment at a time across all trials, so the stream differs from
    ``trials`` sequential scalar counters.
    """
    if n < 0 or trials < 1:
        raise ValueError("need n >= 0 and trials >= 1")
    C = np.zeros(trials, dtype=np.int64)
    if n == 0:
        return C
    b = beta_for(delta)
    inv_log = -math.log(b)
    for _ in range(n):
        u = rng.random(trials)
        np.maximum(C, 1, out=C)
        C += u < np.exp(inv_log * C)
    return C


def mean_beta_power(n: int, delta: float) -> float:
    """Exact E[beta ** C] after n >= 1 increments."""
    b = beta_for(delta)
    return (b - 1) * n + b


def estimate_variance(n: int, delta: float) -> float:
    """Exact variance of the estimator after n increments."""
    b = beta_for(delta)
    return (b - 1) * n * (n + 1) / 2


def beta_power_variance(n: int, delta: float) -> float:
    b = beta_for(delta)
    second = b * b + (b * b - 1) * (n * b + (b - 1) * n * (n - 1) / 2)
    return second - mean_beta_power(n, delta) ** 2


def exponent_cap(n: int, delta: float) -> int:
    """Largest exponent worth provisioning bits for after up to ``n`` increments.

    C never exceeds n + 1.  It also stays below log_beta(2**32 * mean)
    except with probability under 2**-32 (Markov on beta ** C).
    """
    b = beta_for(delta)
    tail = math.ceil(math.log(2.0 ** 32 * mean_beta_power(max(n, 1), delta)) / math.log(b))
    return max(1, min(n + 1, tail))
