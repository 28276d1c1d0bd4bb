"""Deviation bound and minimal-sample-size calculators."""

import math

import pytest

from unconfused.bounds import (
    BoundQuery,
    deviation_bound,
    min_sample_size,
    sample_size_grid,
)
from unconfused.errors import InvalidQueryError

EPS_GRID = (4.0, 2.0, 1.0, 0.5, 0.25)
DELTA_GRID = (0.2, 0.1, 0.05, 0.01, 0.001)


def bound_at(m, epsilon=1.0, delta=0.05, d=2, q=2):
    return deviation_bound(BoundQuery(m=m, epsilon=epsilon, delta=delta,
                                      d=d, q_classes=q))


def closed_form(epsilon, delta, d, q):
    return (128.0 / epsilon ** 2) * (math.log(4.0 * q * q / delta)
                                     + (d + 1) * math.log(8.0 / epsilon))


def test_closed_form_crossing_round_trip():
    # at m = 128 ln(4*4*8^3 / 0.05) the bound equals delta exactly
    m_star = 128.0 * math.log(4.0 * 4.0 * 8.0 ** 3 / 0.05)
    assert bound_at(m_star) == pytest.approx(0.05, abs=1e-9)
    # that crossing sits between the integers 1536 and 1537
    assert 1536.0 < m_star < 1537.0


def test_min_sample_size_frozen_case():
    # smallest integer whose bound clears 0.05: the closed form lands at
    # 1536.85, so 1537 is minimal (verified on both sides)
    m = min_sample_size(1.0, 0.05, 2, 2)
    assert m == 1537
    assert bound_at(m) <= 0.05
    assert bound_at(m - 1) > 0.05


def test_no_data_saturates_at_one():
    for d, q in ((2, 2), (1, 1), (3, 4)):
        assert bound_at(0, d=d, q=q) == 1.0


def test_bound_monotone_decreasing_in_m():
    values = [bound_at(m) for m in range(0, 4001, 250)]
    for lo, hi in zip(values[1:], values):
        assert lo <= hi
    # strictly decreasing once below the cap
    below = [v for v in values if v < 1.0]
    for lo, hi in zip(below[1:], below):
        assert lo < hi
    assert all(0.0 <= v <= 1.0 and not math.isnan(v) for v in values)


def test_min_sample_size_monotonicities():
    base = dict(delta=0.05, d=2, q=2)
    by_eps = [min_sample_size(e, base["delta"], base["d"], base["q"])
              for e in EPS_GRID]
    assert by_eps == sorted(by_eps)  # larger eps first -> nondecreasing list

    by_d = [min_sample_size(1.0, 0.05, d, 2) for d in (1, 2, 3, 4)]
    assert by_d == sorted(by_d)

    by_q = [min_sample_size(1.0, 0.05, 2, q) for q in (2, 4, 8)]
    assert by_q == sorted(by_q)

    by_delta = [min_sample_size(1.0, delta, 2, 2) for delta in DELTA_GRID]
    assert by_delta == sorted(by_delta)


def test_grid_minimality_round_trip():
    rows = sample_size_grid(EPS_GRID, DELTA_GRID, d=2, q_classes=2)
    assert len(rows) == 25
    seen = set()
    for row in rows:
        eps, delta, m = row["epsilon"], row["delta"], row["min_m"]
        seen.add((eps, delta))
        assert row["bound_at_min_m"] <= delta
        assert bound_at(m, epsilon=eps, delta=delta) <= delta
        floor = math.ceil(32.0 / eps ** 2)
        assert m == floor or bound_at(m - 1, epsilon=eps, delta=delta) > delta
        # symmetrization validity: m * eps^2 >= 32 always
        assert m * eps ** 2 >= 32.0
    assert seen == {(e, d) for e in EPS_GRID for d in DELTA_GRID}


def test_scaling_tracks_closed_form_within_fifteen_percent():
    for eps_hi, eps_lo in ((1.0, 0.5), (0.5, 0.25)):
        measured = (min_sample_size(eps_lo, 0.05, 2, 2)
                    / min_sample_size(eps_hi, 0.05, 2, 2))
        predicted = (closed_form(eps_lo, 0.05, 2, 2)
                     / closed_form(eps_hi, 0.05, 2, 2))
        assert abs(measured / predicted - 1.0) <= 0.15


def test_fractional_m_accepted():
    q = BoundQuery(m=1536.85, epsilon=1.0, delta=0.05, d=2, q_classes=2)
    assert 0.0 < deviation_bound(q) < 1.0


def test_query_domain_validation():
    good = dict(m=100, epsilon=1.0, delta=0.05, d=2, q_classes=2)
    for overrides in (dict(epsilon=0.0), dict(epsilon=8.0), dict(epsilon=-1.0),
                      dict(delta=0.0), dict(delta=1.5), dict(m=-1.0),
                      dict(m=math.nan), dict(d=0), dict(q_classes=0)):
        with pytest.raises(InvalidQueryError):
            BoundQuery(**{**good, **overrides})
    # delta = 1 is a valid evaluation point but not a valid target
    BoundQuery(**{**good, "delta": 1.0})
    with pytest.raises(InvalidQueryError):
        min_sample_size(1.0, 1.0, 2, 2)
    with pytest.raises(InvalidQueryError):
        min_sample_size(1.0, 0.0, 2, 2)
