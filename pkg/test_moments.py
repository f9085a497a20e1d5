"""Tests for the Legendre moment table."""
import io
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from src.errors import TableSizeError
from src.moments import build_moment_table, dump_moment_table, moment, recurrence_coefficients, required_columns


def exact_moment(k: int, l: int) -> Fraction:
    """Integral of zeta^l P_k over [-1, 1] (without the normalizer)."""
    if l < k or (l + k) % 2:
        return Fraction(0)
    return Fraction(2 ** (k + 1) * math.factorial(l) * math.factorial((l + k) // 2),
                    math.factorial((l - k) // 2) * math.factorial(l + k + 1))


def test_example_values(small_table):
    assert moment(small_table, 0, 0).hi == pytest.approx(math.sqrt(2.0), rel=1e-16)
    assert moment(small_table, 1, 1).hi == pytest.approx(math.sqrt(2.0 / 3.0), rel=1e-16)
    assert moment(small_table, 2, 2).hi == pytest.approx(4.0 / 15.0 * math.sqrt(2.5), rel=1e-15)
    assert moment(small_table, 0, 2).hi == pytest.approx(math.sqrt(2.0) / 3.0, rel=1e-15)
    assert moment(small_table, 3, 1).hi == 0.0
    assert moment(small_table, 2, 3).hi == 0.0
    assert moment(small_table, 1, 0).hi == 0.0
    assert moment(small_table, 5, 4).hi == 0.0


def test_matches_exact_rational_oracle(small_table):
    bound = mpmath.mpf(2) ** -90
    with mpmath.workprec(200):
        for k in range(small_table.k_max + 1):
            normalizer = mpmath.sqrt(mpmath.mpf(2 * k + 1) / 2)
            for l in range(k, small_table.l_max + 1, 2):
                exact = exact_moment(k, l)
                expected = normalizer * mpmath.mpf(exact.numerator) / exact.denominator
                got = mpmath.mpf(float(small_table.hi[k, l])) + mpmath.mpf(float(small_table.lo[k, l]))
                assert abs(got - expected) / expected < bound, (k, l)


def test_structural_zero_pattern(small_table):
    k = np.arange(small_table.k_max + 1)[:, None]
    l = np.arange(small_table.l_max + 1)[None, :]
    structural = ((k + l) % 2 == 1) | (l < k)
    assert np.array_equal(small_table.hi == 0.0, structural)
    assert np.all(small_table.lo[structural] == 0.0)


def test_large_table_stays_accurate(table):
    k, l = 10, table.l_max - (table.l_max % 2)
    exact = exact_moment(k, l)
    with mpmath.workprec(200):
        expected = mpmath.sqrt(mpmath.mpf(21) / 2) * mpmath.mpf(exact.numerator) / exact.denominator
        got = mpmath.mpf(float(table.hi[k, l])) + mpmath.mpf(float(table.lo[k, l]))
        assert abs(got - expected) / expected < mpmath.mpf(2) ** -85


def test_recurrence_coefficients():
    c_up, c_down = recurrence_coefficients(4)
    assert c_up.hi[0] == pytest.approx(1.0 / math.sqrt(3.0), rel=1e-16)
    assert c_down.hi[0] == 0.0
    assert c_down.hi[1] == pytest.approx(math.sqrt(3.0) / 3.0, rel=1e-16)


def test_gather_and_bounds(small_table):
    values = small_table.gather(np.array([0, 1, 2]), np.array([0, 1, 2]))
    np.testing.assert_allclose(values.hi, [math.sqrt(2.0), math.sqrt(2.0 / 3.0), 4.0 / 15.0 * math.sqrt(2.5)])
    with pytest.raises(TableSizeError):
        small_table.gather(np.array([0]), np.array([small_table.l_max + 1]))
    with pytest.raises(TableSizeError):
        moment(small_table, small_table.k_max + 1, 0)
    with pytest.raises(TableSizeError):
        moment(small_table, 0, -1)


def test_build_preconditions():
    with pytest.raises(ValueError):
        build_moment_table(0, 10)
    with pytest.raises(ValueError):
        build_moment_table(5, 4)
    assert required_columns(512, 10) == 1034


def test_dump_lists_structural_nonzeros_only():
    small = build_moment_table(2, 5)
    out = io.StringIO()
    count = dump_moment_table(small, out)
    lines = out.getvalue().splitlines()
    assert count == len(lines) == 3 + 3 + 2
    assert lines[0].startswith("0 0 1.41421356237309")
    for line in lines:
        k, l, value = line.split()
        assert (int(k) + int(l)) % 2 == 0 and int(l) >= int(k)
        assert float(value) > 0.0
