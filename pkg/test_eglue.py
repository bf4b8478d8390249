"""
Tests for entire gluing and the minimal-norm d-bar solve
"""
import math

import numpy as np
import pytest

from eglue import (AnalyticPatchSet, bump, bump_kernel, cauchy_transform, check_entire_glue, default_weld_M,
                   glue_entire, solve_dbar_min, weld_grid)
from errors import HypothesisError, PatchInputError, ResolutionError
from fields import ComplexField, Grid, RealField, Square, dbar_fd, sample
from solver_config import SolverConfig
from windows import Configuration


def _half_one_plus_z(z):
    return 0.5 * (1 + z)


@pytest.fixture(scope='module')
def welded():
    config = Configuration((0j,), 8.0)
    ps = AnalyticPatchSet.from_functions(config, [_half_one_plus_z], M=400.0, B=10.0, n=65)
    return glue_entire(ps)


@pytest.fixture(scope='module')
def manufactured():
    grid = Grid(Square(0j, 1.0), 129)
    alpha0 = ComplexField(grid, bump(2.0 * grid.Z))
    rhs = dbar_fd(alpha0)
    u = RealField(grid, np.zeros(grid.shape))
    return rhs, solve_dbar_min(rhs, u, SolverConfig(tolerance=1e-6))


def test_bump_values():
    """Test the bump at the center, on the circle and outside"""
    assert bump(0j) == pytest.approx(math.exp(-1.0))
    assert bump(1 + 0j) == 0.0
    assert bump(0.6 + 0.9j) == 0.0


def test_bump_kernel_is_normalised():
    """Test unit mass of the mollifier and its resolution guard"""
    kernel = bump_kernel(0.01, 0.05)
    assert kernel.shape == (11, 11)
    assert kernel.sum() == pytest.approx(1.0)
    with pytest.raises(ResolutionError):
        bump_kernel(0.1, 0.05)


def test_default_weld_M():
    """Test the floor of 400 and the patch-driven term"""
    assert default_weld_M(8.0, 10.0, [0.1]) == 400.0
    assert default_weld_M(8.0, 10.0, [2.0]) == pytest.approx(1.01 * 512 * 2.0)
    assert default_weld_M(8.0, 10.0, [-math.inf]) == 400.0


def test_weld_grid_resolution():
    """Test h <= 1/(32C) and an odd node count"""
    grid = weld_grid(Configuration((0j,), 8.0))
    assert grid.h <= 1.0 / 256
    assert grid.n % 2 == 1
    assert grid.square.half_edge == pytest.approx(1.25)


def test_hypothesis_M_above_forty_log_C():
    """Test that M <= 40 log C is refused before welding"""
    config = Configuration((0j,), 8.0)
    ps = AnalyticPatchSet.from_functions(config, [_half_one_plus_z], M=50.0, B=10.0, n=33)
    assert not ps.hypotheses().passed
    with pytest.raises(HypothesisError):
        ps.validate()


def test_patch_bound_violation():
    """Test that a patch above exp(2^{1-B} M) is refused"""
    config = Configuration((0j,), 8.0)
    ps = AnalyticPatchSet.from_functions(config, [lambda z: 10 * (1 + z)], M=400.0, B=10.0, n=33)
    assert ps.log_patch_bound == pytest.approx(400.0 / 512)
    with pytest.raises(PatchInputError):
        ps.validate()


def test_non_holomorphic_patch():
    """Test that a conjugate-analytic patch fails the holomorphy hypothesis"""
    config = Configuration((0j,), 8.0)
    ps = AnalyticPatchSet.from_functions(config, [lambda z: 0.25 * np.conj(z)], M=400.0, B=10.0, n=33)
    with pytest.raises(PatchInputError):
        ps.validate()


def test_patch_indices_must_match_points():
    """Test that one patch per point is required"""
    config = Configuration((0j, 3 + 0j), 8.0)
    patch = sample(Square(0j, 1.0), 9, _half_one_plus_z)
    with pytest.raises(PatchInputError):
        AnalyticPatchSet(config, {0: patch}, 400.0, 10.0)


def test_cauchy_transform_inverts_dbar():
    """Test that the Cauchy transform of dbar of a bump is close to the bump"""
    grid = Grid(Square(0j, 1.0), 129)
    alpha0 = bump(2.0 * grid.Z)
    back = cauchy_transform(dbar_fd(ComplexField(grid, alpha0)))
    assert np.max(np.abs(back.values - alpha0)) < 0.1 * np.max(np.abs(alpha0))


def test_manufactured_solution_residual(manufactured):
    """Test the interior residual of the solve against a manufactured right-hand side"""
    rhs, solution = manufactured
    assert solution.residual <= 1e-6
    interior = (rhs.values - dbar_fd(solution.alpha).values)[1:-1, 1:-1]
    assert np.max(np.abs(interior)) <= 1e-6 * np.max(np.abs(rhs.values)) * (1 + 1e-9)


def test_projection_does_not_increase_the_norm(manufactured):
    """Test that the polynomial projection lowers the weighted norm below the Cauchy baseline"""
    _, solution = manufactured
    assert solution.log_alpha_norm <= solution.log_particular_norm + 1e-9
    assert solution.log_alpha_norm < solution.log_cauchy_norm
    assert set(solution.to_dict()) >= {'residual_history', 'slack', 'status', 'log_rhs_norm'}


def test_zero_rhs_gives_zero_solution():
    """Test the trivial solve"""
    grid = Grid(Square(0j, 1.0), 17)
    rhs = ComplexField(grid, np.zeros(grid.shape, dtype=complex))
    solution = solve_dbar_min(rhs, RealField(grid, np.zeros(grid.shape)))
    assert np.all(solution.alpha.values == 0)
    assert solution.status == 'holds'


def test_weld_reproduces_the_patch(welded):
    """Test E1 on the core of the window and the remaining weld checks"""
    reports = check_entire_glue(welded)
    assert reports['hypotheses'].passed
    assert reports['cutoff'].passed
    e1 = reports['E1']
    assert e1.passed
    assert e1.entries[0]['core_contained']
    assert e1.entries[0]['sup_diff_core'] <= welded.tau
    assert reports['E2'].passed
    assert reports['rhs_certificate'].passed
    assert reports['dbar_support'].passed
    assert reports['holomorphy'].passed


def test_weld_tau(welded):
    """Test tau = max(e^{-M/4}, 10 x fit residual)"""
    assert welded.tau_target == pytest.approx(math.exp(-100.0))
    assert welded.tau == pytest.approx(max(welded.tau_target, 10 * welded.fit_residual))


def test_weld_evaluates_near_the_patch(welded):
    """Test off-grid evaluation of f at the window center"""
    value = welded.evaluate(np.array([0.1 + 0.05j]))[0]
    assert abs(value - _half_one_plus_z(0.1 + 0.05j)) < 1e-6
