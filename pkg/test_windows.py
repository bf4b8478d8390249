"""
Tests for the window functions and the assembled window system
"""
import json
import math

import mpmath
import numpy as np
import pytest

from errors import ConfigurationError
from fields import Grid, Square
from windows import (Configuration, a_set, b_sets, base_window, build_window_system, check_P1, check_P2,
                     check_P3, check_window_system, grid_fn, log_grid_fn, points_from_spec, window_fn)


@pytest.fixture(scope='module')
def single_point_system():
    return build_window_system(Configuration((0j,), 8.0))


def test_base_window_values():
    """Test b_C at the origin, on the strip boundary and against mpmath"""
    for C in (1.0, 8.0, 32.0):
        assert base_window(0j, C) == pytest.approx(1.0)
        assert base_window(complex(0.3, 1.0 / C), C) == 0.0
    expected = float(mpmath.cosh(mpmath.pi / 2))
    assert base_window(1 + 0j, 1.0) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(2.5092, abs=1e-4)


def test_base_window_vectorised():
    """Test that arrays in give arrays out, zero outside the strip"""
    z = np.array([0j, 0.5j, 2 + 0.01j])
    values = base_window(z, 8.0)
    assert values.shape == (3,)
    assert values[1] == 0.0
    assert values[2] == pytest.approx(math.cos(math.pi * 8 * 0.01 / 2) * math.cosh(math.pi * 8))


def test_window_fn_center_and_edge():
    """Test that v_lambda vanishes at its center and equals 1 on the edge midline"""
    lam = 3.5 - 7.25j
    assert window_fn(lam, lam, 8.0) == 0.0
    assert window_fn(lam + 1, lam, 2.0) == pytest.approx(1.0)
    assert window_fn(lam + 1j, lam, 2.0) == pytest.approx(1.0)


def test_window_fn_vanishes_on_inner_square():
    """Test v_lambda = 0 on S_1^{-1/C}(lambda)"""
    C = 8.0
    grid = Grid(Square(1 + 1j, 1.0 - 1.0 / C - 1e-9), 41)
    assert np.all(window_fn(grid.Z, 1 + 1j, C) == 0.0)


def test_window_fn_bound_on_large_square():
    """Test v_lambda <= e^{3 pi C / 2} on S_3(lambda) at C = 1"""
    grid = Grid(Square(0j, 3.0), 241)
    assert np.max(window_fn(grid.Z, 0j, 1.0)) <= math.exp(1.5 * math.pi) * (1 + 1e-12)


def test_grid_fn_values():
    """Test v_0 at cell centers, on odd horizontal lines and against its growth bound"""
    for C in (1.0, 4.0):
        assert grid_fn(0j, C) == 0.0
        assert grid_fn(2 + 4j, C) == 0.0
    for omega in (-3, 1, 5):
        assert log_grid_fn(complex(0, omega), 2.0) == pytest.approx(4 * math.pi)
    assert grid_fn(1j, 1.0) == pytest.approx(math.exp(2 * math.pi))
    C = 3.0
    assert log_grid_fn(complex(C, 0), C) <= math.pi * C * C / 2 + 2 * math.pi * C


def test_configuration_separation():
    """Test that points at sup-distance <= 2 are refused with the offending pair"""
    with pytest.raises(ConfigurationError) as excinfo:
        Configuration((0j, 1.5 + 1.9j), 8.0)
    assert excinfo.value.path == 'points'
    assert 'points 0' in str(excinfo.value)
    with pytest.raises(ConfigurationError):
        Configuration((0j, 2 + 0j), 8.0)
    Configuration((0j, 2.01 + 0j), 8.0)


def test_configuration_rejects_small_C():
    """Test that C < 1 is a configuration error"""
    with pytest.raises(ConfigurationError) as excinfo:
        Configuration((), 0.5)
    assert excinfo.value.path == 'C'


def test_random_configuration_is_seeded():
    """Test that random configurations are separated and reproducible"""
    a = Configuration.random(8, 8.0, seed=11)
    b = Configuration.random(8, 8.0, seed=11)
    assert len(a) == 8
    assert a.points == b.points
    assert a.points != Configuration.random(8, 8.0, seed=12).points
    with pytest.raises(ConfigurationError):
        Configuration.random(50, 8.0, extent=3.0)


def test_points_from_spec(tmp_path):
    """Test the random, grid and file forms of the points option"""
    assert len(points_from_spec('random:3', 8.0, seed=0)) == 3
    lattice = points_from_spec('grid:2', 8.0, seed=0)
    assert sorted((p.real, p.imag) for p in lattice.points) == [
        (-1.25, -1.25), (-1.25, 1.25), (1.25, -1.25), (1.25, 1.25)]

    path = tmp_path / 'points.json'
    path.write_text(json.dumps({'points': [[0, 0], [3, 0.5]]}))
    assert points_from_spec(f'file:{path}', 8.0, seed=0).points == (0j, 3 + 0.5j)
    path.write_text('[]')
    assert len(points_from_spec(f'file:{path}', 8.0, seed=0)) == 0

    for bad in ('random:x', 'hex:3', f'file:{tmp_path / "missing.json"}'):
        with pytest.raises(ConfigurationError):
            points_from_spec(bad, 8.0, seed=0)


def test_a_and_b_sets_have_at_most_four_members():
    """Test #A_lambda <= 4 and #B^omega <= 4"""
    assert a_set(0j) == [0j]
    assert len(a_set(1 + 1j)) == 4
    config = Configuration.random(12, 8.0, seed=5)
    for lam in config.points:
        assert 1 <= len(a_set(lam)) <= 4
    for members in b_sets(config).values():
        assert len(members) <= 4


def test_empty_configuration_passes_vacuously():
    """Test that an empty configuration gives v = v_0 and vacuous checks"""
    ws = build_window_system(Configuration((), 8.0))
    assert ws.d_sets == {}
    assert np.array_equal(ws.log_v.values, log_grid_fn(ws.grid.Z, 8.0))
    reports = check_window_system(ws)
    assert all(r.passed for r in reports.values())


def test_single_point_window_system(single_point_system):
    """Test P1, P2 and P3 on a single window at C = 8"""
    ws = single_point_system
    assert ws.grid.h <= 1.0 / 64
    p1 = check_P1(ws)
    assert p1.passed
    entry = p1.entries[0]
    assert entry['dilation_contained']
    assert entry['intruders'] <= 20
    # the zero window covers most of S_1 once the strips of width 2/C are removed
    assert entry['area_fraction'] >= 1 - 4 * (1.0 / 8.0) - entry['area_error']
    assert check_P2(ws).passed
    assert check_P3(ws).passed


def test_window_value_at_origin_respects_bound(single_point_system):
    """Test v(0) <= e^{2 pi C}"""
    summary = check_P2(single_point_system).summary
    assert summary['log_v_at_origin_node'] <= summary['log_bound_at_origin']


def test_two_close_windows():
    """Test two windows at sup-distance 2.5 keep at most 20 intruders each"""
    ws = build_window_system(Configuration((0j, 2.5 + 0j), 8.0))
    p1 = check_P1(ws)
    assert p1.passed
    assert all(e['intruders'] <= 20 for e in p1.entries)
    assert check_P2(ws).passed


def test_removing_a_distant_point_keeps_the_window():
    """Test that v on S_1(lambda) ignores a point whose A set is disjoint"""
    config = Configuration((0j, 6.5 + 0.3j), 8.0)
    grid = Grid.for_window(8.0, Square(3 + 0j, 5.0), 4)
    full = build_window_system(config, grid=grid)
    reduced = build_window_system(config.without(1), grid=grid)
    window = full.window_mask(0).mask
    assert np.array_equal(full.log_v.values[window], reduced.log_v.values[window])
    assert not np.array_equal(full.log_v.values, reduced.log_v.values)
