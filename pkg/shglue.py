"""
Subharmonic gluing over window zero sets
u = max(2M v, u_lambda(z - lambda)) near each D_lambda, 2M v elsewhere
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from errors import HypothesisError, PatchInputError
from fields import (ComplexField, FieldInterpolator, Grid, LogField, RasterSet, RealField, Square,
                    dilate, lipschitz_estimate, sample, subharmonicity_report)
from report_utils import CheckReport
from solver_config import GRID_DEFAULTS, WINDOW_DEFAULTS
from windows import Configuration, WindowSystem, build_window_system

logger = logging.getLogger(__name__)

PATCH_SQUARE = Square(0j, 1.0)
MIN_C = 7.0


def log_plus_modulus(f: ComplexField) -> RealField:
    """log+|f| = max(0, log|f|)"""
    with np.errstate(divide='ignore'):
        values = np.maximum(0.0, np.log(np.abs(f.values)))
    return RealField(f.grid, values)


def random_polynomial_fields(count: int, degree: int, n: int, log_sup: float,
                             rng: np.random.Generator) -> List[ComplexField]:
    """
    Random polynomials sampled on S_1, each rescaled so that log max|p| = log_sup

    Args:
        count: Number of polynomials
        degree: Polynomial degree
        n: Samples per edge
        log_sup: Target value of log max over S_1 of |p|
        rng: Generator for the complex Gaussian coefficients

    Returns:
        List of ComplexField on S_1
    """
    grid = Grid(PATCH_SQUARE, n)
    fields = []
    for _ in range(count):
        coeffs = rng.normal(size=degree + 1) + 1j * rng.normal(size=degree + 1)
        values = np.polynomial.polynomial.polyval(grid.Z, coeffs)
        peak = float(np.max(np.abs(values)))
        fields.append(ComplexField(grid, values * math.exp(log_sup - math.log(peak))))
    return fields


@dataclass(frozen=True, eq=False)
class SubharmonicPatchSet:
    """Nonnegative subharmonic patches on S_1, one per configuration point"""
    config: Configuration
    patches: Dict[int, RealField]
    M: float
    tol_factor: float = WINDOW_DEFAULTS['tol_factor']

    def __post_init__(self):
        if not self.config.C > MIN_C:
            raise HypothesisError(f"subharmonic gluing needs C > {MIN_C:g}, got C = {self.config.C:g}")
        if not self.M > 0:
            raise PatchInputError(f"M must be positive, got {self.M}")
        if sorted(self.patches) != list(range(len(self.config))):
            raise PatchInputError(f"expected patches for indices 0..{len(self.config) - 1}, "
                                  f"got {sorted(self.patches)}")
        for index, patch in self.patches.items():
            self._validate_patch(index, patch)

    def _validate_patch(self, index: int, patch: RealField):
        if patch.grid.square != PATCH_SQUARE:
            raise PatchInputError(f"patch {index} must live on S_1 centered at 0")
        if not np.isfinite(patch.values).all():
            raise PatchInputError(f"patch {index} has non-finite values")
        low = float(patch.values.min())
        if low < 0:
            raise PatchInputError(f"patch {index} is negative ({low:.3e}) somewhere")
        high = float(patch.values.max())
        if high > self.M:
            raise PatchInputError(f"patch {index} exceeds the bound: sup = {high:.6g} > M = {self.M:.6g}")
        if patch.grid.n >= 5:
            report = subharmonicity_report(patch, 2 * patch.grid.h, self.tol_factor)
            if not report.passed:
                raise PatchInputError(
                    f"patch {index} fails the sub-mean-value test (defect {report.max_defect:.3e})")

    @classmethod
    def from_functions(cls, config: Configuration, fns: Sequence[Callable], M: float,
                       n: int = GRID_DEFAULTS['patch_n']) -> 'SubharmonicPatchSet':
        """Sample closed-form patches u_lambda on S_1"""
        if len(fns) != len(config):
            raise PatchInputError(f"{len(fns)} patch functions for {len(config)} points")
        patches = {i: sample(PATCH_SQUARE, n, fn, kind='real') for i, fn in enumerate(fns)}
        return cls(config, patches, M)


@dataclass(frozen=True, eq=False)
class SubharmonicGlueResult:
    patch_set: SubharmonicPatchSet
    window_system: WindowSystem
    u: RealField
    log_u: LogField
    margins: Dict[int, Dict[str, float]] = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @property
    def d_sets(self) -> Dict[int, RasterSet]:
        return self.window_system.d_sets


def default_glue_grid(config: Configuration, nodes_per_unit: Optional[int] = None) -> Grid:
    """S_C, enlarged to hold every window, at spacing <= 1/(8C)"""
    half_edge = config.C
    if len(config):
        pts = config.array
        half_edge = max(half_edge, float(np.max(np.maximum(np.abs(pts.real), np.abs(pts.imag)))) + 1.0)
    nodes_per_unit = nodes_per_unit or GRID_DEFAULTS['window_nodes_per_unit']
    return Grid.for_window(config.C, Square(0j, half_edge), nodes_per_unit)


def _shifted_patch(ps: SubharmonicPatchSet, index: int, grid: Grid, mask: np.ndarray) -> np.ndarray:
    """u_lambda(z - lambda) on the masked nodes; NaN where z - lambda leaves S_1"""
    interp = FieldInterpolator(ps.patches[index], order=1)
    lam = ps.config.points[index]
    return interp(grid.Z[mask] - lam)


def glue_subharmonic(ps: SubharmonicPatchSet, grid: Optional[Grid] = None,
                     max_workers: Optional[int] = None) -> SubharmonicGlueResult:
    """
    Glue the patches into one subharmonic u

    Args:
        ps: Validated patch set
        grid: Target grid (S_C at h <= 1/(8C) by default)
        max_workers: Worker cap for the window assembly

    Returns:
        SubharmonicGlueResult with u, log u and per-point margins
    """
    config = ps.config
    C, M = config.C, ps.M
    grid = grid or default_glue_grid(config)
    ws = build_window_system(config, grid=grid, max_workers=max_workers)

    log_2M = math.log(2.0 * M)
    log_u = log_2M + ws.log_v.values
    with np.errstate(over='ignore'):
        u = np.exp(log_u)
    two_m_v = u.copy()

    shifted: Dict[int, np.ndarray] = {}
    for index in range(len(config)):
        region = dilate(ws.d_sets[index], 1.0 / (3 * C)).mask
        values = _shifted_patch(ps, index, grid, region)
        defined = ~np.isnan(values)
        target = np.zeros(grid.shape, dtype=bool)
        target[region] = defined
        patch_values = values[defined]
        u[target] = np.maximum(u[target], patch_values)
        with np.errstate(divide='ignore'):
            log_u[target] = np.maximum(log_u[target], np.log(patch_values))
        full = np.full(grid.shape, np.nan)
        full[target] = patch_values
        shifted[index] = full

    tol_factor = ps.tol_factor
    lip = lipschitz_estimate(np.minimum(two_m_v, 1e12 * M), grid.h)
    log_bound = math.log(2.0) + math.log(M) + math.pi * C * C
    in_sc = Square(0j, C).contains(grid.Z, tol=1e-9 * grid.h)

    margins: Dict[int, Dict[str, float]] = {}
    for index in range(len(config)):
        d_set = ws.d_sets[index]
        patch_on_d = shifted[index][d_set.mask]
        if d_set.is_empty:
            sh1 = 0.0
        elif np.isnan(patch_on_d).any():
            sh1 = math.inf
        else:
            sh1 = float(np.max(np.abs(u[d_set.mask] - patch_on_d)))
        window = ws.window_mask(index).mask
        sh2 = log_bound - float(np.max(log_u[window & in_sc])) if (window & in_sc).any() else math.inf
        ring = (dilate(d_set, 5.0 / (3 * C)) - dilate(d_set, 1.0 / (3 * C))).mask
        if ring.any():
            ring_values = u[ring]
            tol = tol_factor * grid.h * lip[ring]
            sh3_min = float(ring_values.min())
            sh3_ok = bool(np.all(ring_values >= M - tol))
            on_ring = shifted[index][ring]
            on_ring = on_ring[~np.isnan(on_ring)]
            seam_ok = bool(np.all(two_m_v[ring] >= M - tol)) and bool(np.all(on_ring <= M))
        else:
            sh3_min, sh3_ok, seam_ok = math.inf, True, True
        margins[index] = {
            'sh1_max_abs_diff': sh1,
            'sh2_log_margin': sh2,
            'sh3_min': sh3_min,
            'sh3_ok': sh3_ok,
            'seam_ok': seam_ok,
        }

    logger.info(f"Glued {len(config)} subharmonic patches at C={C}, M={M}")
    return SubharmonicGlueResult(
        patch_set=ps,
        window_system=ws,
        u=RealField(grid, u),
        log_u=LogField(grid, log_u),
        margins=margins,
    )


def check_SH1(result: SubharmonicGlueResult) -> CheckReport:
    """u equals the shifted patch on every D_lambda node; window geometry as in P1"""
    ws = result.window_system
    C = ws.config.C
    entries = []
    for index, lam in enumerate(ws.config.points):
        d_set = ws.d_sets[index]
        window = ws.window_mask(index)
        contained = dilate(d_set, 1.0 / C).is_subset(window)
        _, intruders = window.difference(d_set).components()
        diff = result.margins[index]['sh1_max_abs_diff']
        entries.append({'index': index, 'point': lam, 'max_abs_diff': diff,
                        'dilation_contained': contained, 'intruders': intruders,
                        'passed': diff == 0.0 and contained and intruders <= 20})
    return CheckReport.from_entries('SH1', entries, {'C': C})


def check_SH2(result: SubharmonicGlueResult) -> CheckReport:
    """log max over S_C of u <= log 2 + log M + pi C^2"""
    C, M = result.patch_set.config.C, result.patch_set.M
    grid = result.grid
    in_sc = Square(0j, C).contains(grid.Z, tol=1e-9 * grid.h)
    log_bound = math.log(2.0) + math.log(M) + math.pi * C * C
    log_max = float(np.max(result.log_u.values[in_sc]))
    entries = [{'index': i, 'point': lam, 'log_margin': result.margins[i]['sh2_log_margin'],
                'passed': result.margins[i]['sh2_log_margin'] >= 0}
               for i, lam in enumerate(result.patch_set.config.points)]
    report = CheckReport.from_entries('SH2', entries, {
        'log_bound': log_bound, 'log_max_u': log_max, 'log_margin': log_bound - log_max})
    report.passed = report.passed and log_max <= log_bound
    return report


def check_SH3(result: SubharmonicGlueResult) -> CheckReport:
    """min of u on D^{+5/3C} minus D^{+1/3C} >= M up to raster tolerance, plus the seam check"""
    M = result.patch_set.M
    entries = []
    for i, lam in enumerate(result.patch_set.config.points):
        m = result.margins[i]
        entries.append({'index': i, 'point': lam, 'ring_min': m['sh3_min'], 'margin': m['sh3_min'] - M,
                        'seam_ok': m['seam_ok'], 'passed': m['sh3_ok'] and m['seam_ok']})
    return CheckReport.from_entries('SH3', entries, {'M': M})


def check_glued_subharmonic(result: SubharmonicGlueResult) -> CheckReport:
    grid = result.grid
    tol_factor = 2 * result.patch_set.tol_factor
    radius = WINDOW_DEFAULTS['subharmonic_radius_nodes'] * grid.h
    report = subharmonicity_report(result.log_u, radius, tol_factor)
    nonnegative = bool(np.all(result.u.values >= 0))
    summary = dict(report.to_dict(), nonnegative=nonnegative, tol_factor=tol_factor)
    return CheckReport(name='subharmonic', passed=report.passed and nonnegative, summary=summary)


def check_glue_result(result: SubharmonicGlueResult) -> Dict[str, CheckReport]:
    return {
        'SH1': check_SH1(result),
        'SH2': check_SH2(result),
        'SH3': check_SH3(result),
        'subharmonic': check_glued_subharmonic(result),
    }
