"""
Tests for the square, grid, field and raster substrate
"""
import math

import numpy as np
import pytest

from errors import EvaluationError, ResolutionError
from fields import (ComplexField, FieldInterpolator, Grid, LogField, RasterSet, RealField, Square, dbar_fd,
                    dilate, erode, sample, square_mask, subharmonicity_defect, subharmonicity_report, sup_norm)


@pytest.fixture
def unit_grid():
    return Grid(Square(0j, 1.0), 65)


def test_square_rejects_nonpositive_edge():
    """Test that a square needs a positive half edge"""
    with pytest.raises(ValueError):
        Square(0j, 0.0)
    with pytest.raises(ValueError):
        Square(1 + 1j, -2.0)


def test_square_geometry():
    """Test bounds, containment and translation of a square"""
    sq = Square(1 + 2j, 0.5)
    assert sq.bounds == (0.5, 1.5, 1.5, 2.5)
    assert sq.area == pytest.approx(1.0)
    assert sq.contains(1.5 + 2.5j)
    assert not sq.contains(1.6 + 2j)
    assert sq.translate(-1 - 2j) == Square(0j, 0.5)
    assert sq.expand(0.5).half_edge == pytest.approx(1.0)


def test_grid_spacing_and_nodes():
    """Test that the grid includes the corners and has spacing 2a/(n-1)"""
    grid = Grid(Square(0j, 1.0), 5)
    assert grid.h == pytest.approx(0.5)
    assert grid.Z[0, 0] == -1 - 1j
    assert grid.Z[-1, -1] == 1 + 1j
    # row index follows y
    assert grid.Z[4, 0] == -1 + 1j
    assert grid.refine().n == 9
    assert Grid.for_window(8.0).h <= 1.0 / 64


def test_grid_needs_two_samples():
    """Test that a one-node grid is rejected"""
    with pytest.raises(ValueError):
        Grid(Square(0j, 1.0), 1)


def test_square_mask_area(unit_grid):
    """Test that the raster area of the full square brackets 4"""
    measure = square_mask(unit_grid, Square(0j, 1.0)).area()
    assert measure.lower <= 4.0 <= measure.upper
    assert measure.error > 0


def test_field_rejects_nan(unit_grid):
    """Test that NaN values are refused by every field kind"""
    values = np.zeros(unit_grid.shape)
    values[3, 3] = np.nan
    with pytest.raises(ValueError):
        RealField(unit_grid, values)
    with pytest.raises(ValueError):
        ComplexField(unit_grid, values.astype(complex))


def test_log_field_zero_set(unit_grid):
    """Test that -inf entries of a log field form its zero set"""
    values = np.zeros(unit_grid.shape)
    values[10, 20] = -np.inf
    lf = LogField(unit_grid, values)
    zeros = lf.zero_set()
    assert zeros.count == 1
    assert zeros.mask[10, 20]
    assert lf.exp().values[10, 20] == 0.0
    with pytest.raises(ValueError):
        LogField(unit_grid, np.full(unit_grid.shape, np.inf))


def test_sample_rejects_non_finite_values():
    """Test that sampling log|z| through the origin raises"""
    with pytest.raises(EvaluationError):
        sample(Square(0j, 1.0), 5, lambda z: np.log(np.abs(z)))


def test_sample_infers_kind():
    """Test that real and complex functions give matching field kinds"""
    assert sample(Square(0j, 1.0), 9, lambda z: np.abs(z)).kind == 'real'
    assert sample(Square(0j, 1.0), 9, lambda z: z * z).kind == 'complex'


def test_dbar_of_holomorphic_polynomial_vanishes():
    """Test that dbar_fd of z^2 is zero to rounding, edges included"""
    f = sample(Square(0j, 1.0), 33, lambda z: z * z)
    assert sup_norm(dbar_fd(f)) < 1e-10


def test_dbar_of_conjugate_is_one():
    """Test that dbar_fd of conj(z) is identically 1"""
    f = sample(Square(0.5 + 0.5j, 2.0), 17, np.conj)
    assert np.allclose(dbar_fd(f).values, 1.0)


def test_dbar_needs_three_samples():
    """Test that dbar_fd refuses a 2x2 grid"""
    f = sample(Square(0j, 1.0), 2, lambda z: z)
    with pytest.raises(ResolutionError):
        dbar_fd(f)


def test_subharmonicity_of_modulus():
    """Test that |z| passes and -|z| fails the sub-mean-value test"""
    u = sample(Square(0j, 1.0), 65, np.abs)
    assert subharmonicity_report(u, 0.5).passed
    assert subharmonicity_defect(u, 0.5) <= 1e-12

    report = subharmonicity_report(u.with_values(-u.values), 0.5)
    assert not report.passed
    assert report.max_defect == pytest.approx(0.5, abs=0.01)


def test_subharmonicity_radius_below_two_spacings():
    """Test that a radius under 2h is a resolution error"""
    u = sample(Square(0j, 1.0), 65, np.abs)
    with pytest.raises(ResolutionError):
        subharmonicity_report(u, u.grid.h)


def test_log_field_subharmonicity():
    """Test that log|z| is accepted in the log domain"""
    grid = Grid(Square(0j, 1.0), 65)
    with np.errstate(divide='ignore'):
        lf = LogField(grid, np.log(np.abs(grid.Z)))
    assert subharmonicity_report(lf, 0.25).passed


def test_cubic_interpolation_is_exact_for_quadratics():
    """Test that the cubic interpolator reproduces z^2 off the nodes"""
    f = sample(Square(0j, 1.0), 17, lambda z: z * z)
    interp = FieldInterpolator(f, order=3)
    pts = np.array([0.123 - 0.456j, -0.77 + 0.31j, 0.999 + 0.001j])
    assert np.allclose(interp(pts), pts ** 2, atol=1e-8)


def test_interpolation_outside_square_is_nan():
    """Test that points beyond the grid square get the outside value"""
    f = sample(Square(0j, 1.0), 17, lambda z: z)
    assert np.isnan(FieldInterpolator(f)(2.0 + 0j))
    assert FieldInterpolator(f, outside=0j)(0.5 + 3j) == 0


def test_linear_interpolation_on_nodes():
    """Test that order 1 interpolation returns node values exactly"""
    f = sample(Square(0j, 1.0), 9, lambda z: np.real(z) ** 2)
    interp = FieldInterpolator(f, order=1)
    assert interp(f.grid.Z[3, 5]) == pytest.approx(f.values[3, 5])


def test_dilate_and_erode(unit_grid):
    """Test dilation by a quarter along an axis and containment of erosion"""
    s = RasterSet.from_square(unit_grid, Square(0j, 0.5))
    grown = dilate(s, 0.25)
    iy, ix = unit_grid.nearest_index(0.75 + 0j)
    assert grown.mask[iy, ix]
    iy, ix = unit_grid.nearest_index(0.8125 + 0j)
    assert not grown.mask[iy, ix]
    assert s.is_subset(grown)
    assert erode(s, 0.1).is_subset(s)
    assert erode(s, 0.1).count < s.count
    assert dilate(s, 0) is s
    with pytest.raises(ValueError):
        dilate(s, -1.0)


def test_raster_set_operations(unit_grid):
    """Test union, intersection, difference and components"""
    left = RasterSet.from_square(unit_grid, Square(-0.5 + 0j, 0.25))
    right = RasterSet.from_square(unit_grid, Square(0.5 + 0j, 0.25))
    both = left | right
    assert both.count == left.count + right.count
    assert (left & right).is_empty
    assert (both - right).count == left.count
    _, count = both.components()
    assert count == 2
    assert both.complement().count == unit_grid.n ** 2 - both.count


def test_sup_norm_over_region(unit_grid):
    """Test sup_norm restricted to a region and on an empty region"""
    f = RealField(unit_grid, np.abs(unit_grid.Z))
    region = RasterSet.from_square(unit_grid, Square(0j, 0.5))
    assert sup_norm(f, region) == pytest.approx(math.sqrt(0.5))
    assert sup_norm(f) == pytest.approx(math.sqrt(2.0))
    with pytest.raises(ValueError):
        sup_norm(f, RasterSet.empty(unit_grid))


def test_dbar_of_squared_modulus():
    """Test that dbar_fd of |z|^2 is z"""
    f = sample(Square(0j, 1.0), 33, lambda z: np.abs(z) ** 2 + 0j)
    assert np.allclose(dbar_fd(f).values, f.grid.Z, atol=1e-10)


def test_sup_norm_of_square_on_inner_square():
    """Test max |z^2| over S_1 inside a field on S_2"""
    f = sample(Square(0j, 2.0), 17, lambda z: z * z)
    region = RasterSet.from_square(f.grid, Square(0j, 1.0))
    assert sup_norm(f, region) == pytest.approx(2.0)
    assert sup_norm(f) == pytest.approx(8.0)
