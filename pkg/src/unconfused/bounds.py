"""Closed-form deviation bound and sample-size threshold calculators.

These are illustrative magnitudes from a double-sample / covering argument,
not tight guarantees: constants (the 128 in the exponent, the factor 4, the
Q-squared union term, the (d+1) covering exponent) are taken literally from
the derivation they implement, with the exponent's sign the only correction
(a growing exponential cannot bound a probability).

``deviation_bound`` evaluates  min(1, 4 Q^2 (8/eps)^(d+1) exp(-m eps^2/128))
in log space so huge covering terms never overflow into inf * 0.
``min_sample_size`` inverts it: the smallest integer m whose bound drops to
delta, floored at m eps^2 >= 32 (the symmetrization validity threshold; the
closed form exceeds it for every admissible query, so the floor is a guard,
not a driver).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidQueryError


@dataclass(frozen=True)
class BoundQuery:
    """Point at which to evaluate the deviation bound.  ``m`` may be
    fractional: the closed form is continuous in the sample count and the
    round-trip tests exercise it at the exact crossing."""

    m: float
    epsilon: float
    delta: float
    d: int
    q_classes: int

    def __post_init__(self):
        if not (math.isfinite(self.m) and self.m >= 0):
            raise InvalidQueryError(f"m must be finite and >= 0, got {self.m}")
        if not 0 < self.epsilon < 8:
            raise InvalidQueryError(
                f"epsilon must lie in (0, 8), got {self.epsilon}")
        if not 0 < self.delta <= 1:
            raise InvalidQueryError(
                f"delta must lie in (0, 1], got {self.delta}")
        if self.d < 1:
            raise InvalidQueryError(f"d must be >= 1, got {self.d}")
        if self.q_classes < 1:
            raise InvalidQueryError(f"q_classes must be >= 1, got {self.q_classes}")


def _log_bound(m: float, epsilon: float, d: int, q_classes: int) -> float:
    return (math.log(4.0) + 2.0 * math.log(q_classes)
            + (d + 1) * math.log(8.0 / epsilon)
            - m * epsilon * epsilon / 128.0)


def deviation_bound(query: BoundQuery) -> float:
    """Probability bound on a large empirical-vs-true deviation; capped at 1,
    never NaN, monotone decreasing in m."""
    log_b = _log_bound(query.m, query.epsilon, query.d, query.q_classes)
    if log_b >= 0.0:
        return 1.0
    return math.exp(log_b)


def min_sample_size(epsilon: float, delta: float, d: int, q_classes: int) -> int:
    """Smallest integer m with deviation_bound(m, ...) <= delta.

    Ceiling of the closed-form inversion, then nudged by direct evaluation so
    the minimality round-trip holds exactly despite float rounding.
    """
    if not 0 < delta < 1:
        raise InvalidQueryError(f"delta must lie in (0, 1), got {delta}")
    probe = BoundQuery(m=0, epsilon=epsilon, delta=delta, d=d, q_classes=q_classes)
    closed_form = (128.0 / (epsilon * epsilon)) * (
        math.log(4.0 * q_classes * q_classes / delta)
        + (d + 1) * math.log(8.0 / epsilon))
    m = max(0, math.ceil(closed_form))

    def bound_at(k: int) -> float:
        return deviation_bound(BoundQuery(m=k, epsilon=probe.epsilon,
                                          delta=delta, d=d, q_classes=q_classes))

    while bound_at(m) > delta:
        m += 1
    while m > 0 and bound_at(m - 1) <= delta:
        m -= 1
    floor = math.ceil(32.0 / (epsilon * epsilon))
    return max(m, floor)


def sample_size_grid(epsilons, deltas, d: int, q_classes: int) -> list[dict]:
    """One row per (epsilon, delta) pair: the minimal m and the bound value
    actually reached there.  Backs the command-line table."""
    rows = []
    for eps in epsilons:
        for delta in deltas:
            m = min_sample_size(eps, delta, d, q_classes)
            reached = deviation_bound(
                BoundQuery(m=m, epsilon=eps, delta=delta, d=d, q_classes=q_classes))
            rows.append({"epsilon": float(eps), "delta": float(delta),
                         "min_m": int(m), "bound_at_min_m": reached})
    return rows
