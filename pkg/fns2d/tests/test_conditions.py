from __future__ import annotations

import math

import pytest

from core.errors import PreconditionError
from solver.conditions import (
    LOCAL_THRESHOLD,
    LocalParams,
    check_parameter_conditions,
    feasible_parameter_search,
    local_params_for,
    sample_point,
)


@pytest.mark.parametrize("c", [1.0 / 64.0, 1.0 / 32.0, 3.0 / 64.0])
def test_sample_point_is_admissible(c):
    v = check_parameter_conditions(sample_point(c), LOCAL_THRESHOLD + c)
    assert v.satisfied
    # conditions 4, 6, 7 and 9 sit exactly c away from their edges
    for n in (4, 6, 7, 9):
        assert v.margins[n - 1] == pytest.approx(c)


def test_sample_point_has_equal_time_exponents():
    p = sample_point(1.0 / 32.0)
    assert p.beta == p.q
    assert p.reciprocals == pytest.approx((0.375, 7.0 / 32.0, 0.375))


def test_infinite_exponents():
    p = LocalParams.from_reciprocals(0.1, 0.0, 0.0, 0.5, 0.0)
    assert math.isinf(p.beta) and math.isinf(p.q)
    assert p.reciprocals == (0.0, 0.5, 0.0)


def test_violations_are_numbered():
    p = sample_point(1.0 / 32.0)
    v = check_parameter_conditions(LocalParams(p.alpha, 0.5, p.beta, p.p, p.q), 0.47)
    assert 9 in v.violated
    assert not v.satisfied


def test_non_strict_conditions_admit_equality():
    # beta = q puts condition 3 on its edge
    v = check_parameter_conditions(sample_point(1.0 / 32.0), 15.0 / 32.0)
    assert v.margins[2] == 0.0
    assert 3 not in v.violated


def test_exponents_below_one_are_rejected():
    with pytest.raises(PreconditionError, match="beta"):
        check_parameter_conditions(LocalParams(0.1, 0.0, 0.5, 4.0, 4.0), 0.47)


def test_window_is_empty_below_threshold():
    assert feasible_parameter_search(0.40) is None
    with pytest.raises(PreconditionError, match="no admissible"):
        local_params_for(0.40)


def test_window_is_open_above_threshold():
    found = feasible_parameter_search(0.47)
    assert found is not None
    assert check_parameter_conditions(found, 0.47).satisfied


def test_local_params_prefers_sample_point():
    assert local_params_for(0.47) == sample_point(0.47 - LOCAL_THRESHOLD)
