"""
Tests for subharmonic gluing over window zero sets
"""
import math

import numpy as np
import pytest

from errors import HypothesisError, PatchInputError
from fields import Grid, RealField, Square, sample
from shglue import (PATCH_SQUARE, SubharmonicPatchSet, check_glue_result, glue_subharmonic,
                    log_plus_modulus, random_polynomial_fields)
from utils import make_rng
from windows import Configuration


@pytest.fixture(scope='module')
def glued():
    config = Configuration((0j,), 8.0)
    fields = random_polynomial_fields(1, 3, 129, 2.5, make_rng(7))
    ps = SubharmonicPatchSet(config, {0: log_plus_modulus(fields[0])}, 5.0)
    return glue_subharmonic(ps)


def test_random_polynomials_hit_the_target_sup():
    """Test that each random polynomial is rescaled to the requested log sup"""
    fields = random_polynomial_fields(3, 4, 33, 1.7, make_rng(1))
    assert len(fields) == 3
    for f in fields:
        assert f.grid.square == PATCH_SQUARE
        assert math.log(np.max(np.abs(f.values))) == pytest.approx(1.7)


def test_log_plus_modulus():
    """Test log+|f| = max(0, log|f|), zeros included"""
    f = sample(PATCH_SQUARE, 9, lambda z: 3 * z)
    u = log_plus_modulus(f)
    assert u.kind == 'real'
    assert np.all(u.values >= 0)
    assert u.values[4, 4] == 0.0
    assert u.values[-1, -1] == pytest.approx(math.log(3 * math.sqrt(2)))


def test_patch_set_needs_C_above_seven():
    """Test the C > 7 hypothesis"""
    config = Configuration((0j,), 7.0)
    patch = sample(PATCH_SQUARE, 9, lambda z: np.abs(z), kind='real')
    with pytest.raises(HypothesisError):
        SubharmonicPatchSet(config, {0: patch}, 5.0)


def test_patch_set_rejects_bad_patches():
    """Test sign, bound, index and domain validation of the patches"""
    config = Configuration((0j,), 8.0)
    with pytest.raises(PatchInputError):
        SubharmonicPatchSet(config, {0: sample(PATCH_SQUARE, 9, lambda z: np.abs(z) - 0.5)}, 5.0)
    with pytest.raises(PatchInputError):
        SubharmonicPatchSet(config, {0: sample(PATCH_SQUARE, 9, lambda z: 10 * np.abs(z))}, 5.0)
    with pytest.raises(PatchInputError):
        SubharmonicPatchSet(config, {1: sample(PATCH_SQUARE, 9, np.abs)}, 5.0)
    with pytest.raises(PatchInputError):
        SubharmonicPatchSet(config, {0: sample(Square(1 + 0j, 1.0), 9, np.abs)}, 5.0)
    with pytest.raises(PatchInputError):
        SubharmonicPatchSet(config, {0: sample(PATCH_SQUARE, 33, lambda z: 1 - np.abs(z) ** 2)}, 5.0)


def test_patch_set_from_functions():
    """Test sampling closed-form patches"""
    config = Configuration((0j, 3 + 0j), 8.0)
    ps = SubharmonicPatchSet.from_functions(config, [np.abs, lambda z: np.abs(z) ** 2], 5.0, n=33)
    assert sorted(ps.patches) == [0, 1]
    with pytest.raises(PatchInputError):
        SubharmonicPatchSet.from_functions(config, [np.abs], 5.0, n=33)


def test_glued_u_equals_patch_on_window(glued):
    """Test that u is the shifted patch node for node on D_lambda"""
    assert glued.margins[0]['sh1_max_abs_diff'] == 0.0
    d_set = glued.d_sets[0]
    assert not d_set.is_empty
    assert np.all(glued.u.values >= 0)


def test_glued_u_checks(glued):
    """Test SH1-SH3 and subharmonicity of the glued u"""
    reports = check_glue_result(glued)
    assert set(reports) == {'SH1', 'SH2', 'SH3', 'subharmonic'}
    assert reports['SH1'].passed
    assert reports['SH2'].passed
    assert reports['SH2'].summary['log_margin'] >= 0
    assert reports['SH3'].passed
    assert reports['subharmonic'].passed


def test_glue_grid_covers_the_C_square(glued):
    """Test that the default grid holds S_C at spacing <= 1/(8C)"""
    grid = glued.grid
    assert grid.square.half_edge >= 8.0
    assert grid.h <= 1.0 / 64


def test_empty_configuration_gives_twice_M_v():
    """Test that without points u is 2M v"""
    config = Configuration((), 8.0)
    ps = SubharmonicPatchSet(config, {}, 2.0)
    grid = Grid.for_window(8.0, Square(0j, 2.0), 4)
    result = glue_subharmonic(ps, grid=grid)
    expected = math.log(4.0) + result.window_system.log_v.values
    assert np.array_equal(result.log_u.values, expected)
    assert isinstance(result.u, RealField)
