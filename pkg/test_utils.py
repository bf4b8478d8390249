"""
Tests for the numeric helpers
"""
import math

import numpy as np
import pytest

from utils import log_cosh, log_of_log_sum, make_rng, run_timestamp, to_builtin


def test_log_cosh_matches_direct_formula():
    """Test log_cosh against log(cosh t) where cosh does not overflow"""
    for t in (0.0, 0.5, -3.0, 20.0):
        assert log_cosh(t) == pytest.approx(math.log(math.cosh(t)), abs=1e-12)


def test_log_cosh_large_argument():
    """Test that log_cosh stays finite far beyond the float range of cosh"""
    assert log_cosh(1e4) == pytest.approx(1e4 - math.log(2.0))


def test_log_of_log_sum():
    """Test log(c + e^x) in and beyond the float range"""
    assert log_of_log_sum(math.log(3.0), 2.0) == pytest.approx(math.log(5.0))
    assert log_of_log_sum(1e5, 2.0) == pytest.approx(1e5)
    assert log_of_log_sum(7.0, 0.0) == 7.0


def test_make_rng_is_reproducible():
    """Test that equal seeds give equal streams"""
    a = make_rng(42).random(5)
    b = make_rng(42).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, make_rng(43).random(5))


def test_to_builtin():
    """Test conversion of numpy scalars, complex and non-finite values"""
    out = to_builtin({'a': np.float64(1.5), 'b': [np.int64(2), np.bool_(True)], 'c': 1 + 2j,
                      'd': math.inf, 'e': np.array([0.5, -math.inf]), 3: 'x'})
    assert out == {'a': 1.5, 'b': [2, True], 'c': {'re': 1.0, 'im': 2.0}, 'd': 'inf',
                   'e': [0.5, '-inf'], '3': 'x'}
    assert to_builtin(float('nan')) == 'nan'


def test_run_timestamp():
    """Test fixed and generated timestamps"""
    assert run_timestamp('20260101T000000') == '20260101T000000'
    assert len(run_timestamp()) == 15
