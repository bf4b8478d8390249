"""
Tests for the growth bounds, the modulus of continuity, the growth ledger and a two-level construction
"""
import math

import mpmath
import numpy as np
import pytest

from construct import (F1_FLOOR, NONCONSTANCY_FLOOR, closeness_target, first_level, f1_facts, growth_ledger,
                       ledger_grid, log_log_bound, log_M_B, modulus_delta, nonconstancy_chain, run_pipeline)
from errors import ConfigurationError
from fields import Square, sample
from tower import generate_tower_model


@pytest.fixture(scope='module')
def small_ledger():
    return growth_ledger(B=20.0, D=100.0, eps=0.5, mmax=1e5, points_per_decade=10)


@pytest.fixture(scope='module')
def two_levels():
    return run_pipeline({'levels': 2}, seed=0)


def test_log_M_B_values():
    """Test log M_B at m = 2 and m = 3 against an mpmath evaluation"""
    assert log_M_B(20.0, 100.0, 2) == 40.0
    mpmath.mp.dps = 30
    expected = 60 + mpmath.pi * 100 ** 2 * 4 * mpmath.log(2) ** 4
    assert log_M_B(20.0, 100.0, 3) == pytest.approx(float(expected), rel=1e-12)
    assert log_M_B(20.0, 100.0, 3) == pytest.approx(2.9068e4, rel=1e-4)


def test_log_log_bound():
    """Test the double log with and without overflow of e^x"""
    assert log_log_bound(math.log(2.0)) == pytest.approx(math.log(2.0))
    assert log_log_bound(100.0) == pytest.approx(100.0)
    assert log_log_bound(100.0, factor=2.0) == pytest.approx(100.0)
    assert log_log_bound(0.0, extra=1.0) == pytest.approx(math.log(math.log(1.0 + math.e)))


def test_closeness_target():
    """Test the per-level closeness target 10^(-2n)"""
    assert closeness_target(1) == pytest.approx(1e-2)
    assert closeness_target(3) == pytest.approx(1e-6)


def test_modulus_of_identity():
    """Test that z has modulus delta = 7h for threshold 8h"""
    f = sample(Square(0j, 1.0), 65, lambda z: z)
    result = modulus_delta([f], 2, threshold=0.25)
    assert result.delta == pytest.approx(7.0 / 32.0)
    assert result.achieved == pytest.approx(7.0 / 32.0)
    assert not result.below_floor


def test_modulus_below_grid_step():
    """Test that a target finer than one step falls back to delta = h"""
    f = sample(Square(0j, 1.0), 65, lambda z: z)
    result = modulus_delta([f], 2, threshold=1e-6)
    assert result.below_floor
    assert result.delta == pytest.approx(f.grid.h)
    with pytest.raises(ValueError):
        modulus_delta([], 2)


def test_f1_facts_and_nonconstancy_chain():
    """Test the F_1 measures and the level-2 lower bound on mu(|F_n| <= 1/3)"""
    model = generate_tower_model(levels=2, seed=0)
    report = f1_facts(model)
    assert report.passed
    assert report.entries[0]['measure'] == pytest.approx(math.pi / 64 * 0.995)
    assert report.entries[1]['measure'] > F1_FLOOR
    chain = nonconstancy_chain(model, 2)
    assert chain['loss_sum'] == pytest.approx(1.0 / (100 * 2 * math.log(2) ** 2))
    assert chain['lower_bound'] >= NONCONSTANCY_FLOOR


def test_first_level_is_identity():
    """Test that F_1 is z on every level-1 class"""
    seq = first_level(generate_tower_model(levels=2, seed=0))
    assert seq.N == 1
    w = np.array([0.3 + 0.1j, -2j])
    for lf in seq.levels[1]:
        assert np.array_equal(lf.evaluate(w), w)


def test_ledger_grid():
    """Test grid endpoints and rejection of bad grids"""
    m = ledger_grid(1000, 'geometric', 5)
    assert m[0] == 2 and m[1] == 3 and m[-1] == 1000
    assert np.all(np.diff(m) > 0)
    assert list(ledger_grid(10, 'linear', 20)) == list(range(2, 11))
    with pytest.raises(ConfigurationError):
        ledger_grid(1000, 'cubic')
    with pytest.raises(ConfigurationError):
        ledger_grid(2)


def test_growth_ledger_summary(small_ledger):
    """Test the ledger summary and the decreasing tail of the ratio"""
    summary = small_ledger.summary()
    assert summary['mmax'] == 100000
    assert summary['log_M_B_2'] == pytest.approx(40.0)
    assert summary['decreasing_from_1e3']
    assert small_ledger.decreasing_from(1e3)
    assert summary['max_cross_check_rel'] < 1e-9
    assert summary['rows'] == len(small_ledger.to_frame())


def test_growth_ledger_matches_direct_sum(small_ledger):
    """Test prefix-summed log M_B against the direct sum for small m"""
    frame = small_ledger.to_frame()
    for _, row in frame[frame['m'] <= 200].iterrows():
        assert row['log_M_B'] == pytest.approx(log_M_B(20.0, 100.0, int(row['m'])), rel=1e-12)


def test_growth_ledger_rejects_bad_constants():
    """Test that D and eps must be positive"""
    with pytest.raises(ConfigurationError):
        growth_ledger(D=0.0, mmax=100)
    with pytest.raises(ConfigurationError):
        growth_ledger(eps=0.0, mmax=100)


def test_two_level_construction(two_levels):
    """Test the reports of a two-level desk construction"""
    reports = two_levels.reports
    assert two_levels.sequence.N == 2
    assert two_levels.params['regime'] == 'desk'
    assert reports['f1_facts'].passed
    assert reports['B3'].skipped
    assert reports['nonconstancy'].passed
    assert reports['B5'].passed
    levels = {e['level'] for e in reports['B5'].entries}
    assert levels == {1, 2}
    assert two_levels.sequence.partitions[2].k_prev == len(two_levels.sequence.partitions[1].cells)
    for name in ('B1', 'B2', 'E1', 'telescoping', 'property_A', 'B4_prime'):
        assert name in reports


def test_two_level_frame(two_levels):
    """Test that the level frame lists every class with its weld data"""
    frame = two_levels.level_frame()
    seq = two_levels.sequence
    assert len(frame) == len(seq.levels[1]) + len(seq.levels[2])
    welded = frame[frame['level'] == 2]
    assert (welded['M'] >= 400).all()
    assert (welded['grid_n'] % 2 == 1).all()


def test_modulus_of_constant_field_is_capped():
    """Test that a constant field gets delta = 1"""
    f = sample(Square(0j, 1.0), 33, lambda z: np.ones_like(z))
    result = modulus_delta([f], 2)
    assert result.delta == pytest.approx(1.0)
    assert result.achieved == 0.0
