"""
Entire gluing of analytic patches
Cutoff chi from mollified window indicators, g = g0 * chi, and the minimal
weighted-norm correction alpha with dbar alpha = dbar g, so f = g - alpha
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, signal, sparse
from scipy.sparse.linalg import lsqr
from scipy.special import logsumexp

from artifact_manager import map_ordered
from errors import DbarSolverError, GeometryError, HypothesisError, PatchInputError, ResolutionError
from fields import (ComplexField, FieldInterpolator, Grid, RasterSet, RealField, Square, dbar_fd,
                    dilate, erode, sample, square_mask, sup_norm)
from report_utils import CheckReport
from shglue import (PATCH_SQUARE, SubharmonicGlueResult, SubharmonicPatchSet, glue_subharmonic,
                    log_plus_modulus)
from solver_config import GLUE_DEFAULTS, GRID_DEFAULTS, SolverConfig
from windows import Configuration

logger = logging.getLogger(__name__)

# Relative excess of the weighted-norm certificate still attributed to discretisation
CERTIFICATE_SLACK = 0.1
E1_MEASURE_CONSTANTS = (160.0, 200.0)


def bump(z):
    """exp(-1/(1 - |z|^2)) on the open unit disc, 0 elsewhere"""
    z = np.asarray(z, dtype=complex)
    r2 = np.abs(z) ** 2
    inside = r2 < 1.0
    with np.errstate(divide='ignore', over='ignore'):
        values = np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - r2, 1.0)), 0.0)
    return float(values) if values.ndim == 0 else values


def bump_kernel(h: float, radius: float) -> np.ndarray:
    """Bump rescaled to the given radius, sampled at spacing h and normalised to unit sum"""
    k = int(math.floor(radius / h + 1e-9))
    if k < 1:
        raise ResolutionError(f"mollifier radius {radius:.4g} is below the grid spacing {h:.4g}")
    offsets = np.arange(-k, k + 1) * h
    kernel = bump((offsets[None, :] + 1j * offsets[:, None]) / radius)
    return kernel / kernel.sum()


@dataclass(frozen=True, eq=False)
class Cutoff:
    chi: RealField
    grad_max: float
    C: float

    @property
    def grid(self) -> Grid:
        return self.chi.grid


def build_cutoff(d_sets: Dict[int, RasterSet], C: float, grid: Optional[Grid] = None) -> Cutoff:
    """
    Mollified indicator of the D_lambda^{+1/2C}

    Args:
        d_sets: Zero windows D_lambda on a common grid
        C: Window constant
        grid: Grid to use when d_sets is empty

    Returns:
        Cutoff with chi in [0, 1] and its measured gradient bound
    """
    if grid is None:
        if not d_sets:
            raise ValueError("build_cutoff needs a grid when there are no windows")
        grid = next(iter(d_sets.values())).grid
    h = grid.h
    h_max = 1.0 / (32.0 * C)
    if h > h_max * (1 + 1e-9):
        raise ResolutionError(f"cutoff needs h <= 1/(32C) = {h_max:.4g}, got h = {h:.4g}")

    psi = np.zeros(grid.shape)
    for d_set in d_sets.values():
        psi[dilate(d_set, 1.0 / (2 * C)).mask] = 1.0
    chi = ndimage.convolve(psi, bump_kernel(h, 1.0 / (4 * C)), mode='constant', cval=0.0)
    chi = np.clip(chi, 0.0, 1.0)
    gy, gx = np.gradient(chi, h, h)
    grad_max = float(np.max(np.hypot(gx, gy)))
    logger.debug(f"Cutoff built: max |grad chi| = {grad_max:.4g} (bound {100 * C:.4g})")
    return Cutoff(chi=RealField(grid, chi), grad_max=grad_max, C=C)


def check_cutoff(cutoff: Cutoff, d_sets: Dict[int, RasterSet]) -> CheckReport:
    """chi = 1 on D^{+1/4C}, chi = 0 off the union of D^{+3/4C}, |grad chi| <= 100C"""
    C = cutoff.C
    chi = cutoff.chi.values
    near = np.zeros(chi.shape, dtype=bool)
    entries = []
    for index, d_set in d_sets.items():
        inner = dilate(d_set, 1.0 / (4 * C)).mask
        near |= dilate(d_set, 3.0 / (4 * C)).mask
        deficit = float(np.max(1.0 - chi[inner])) if inner.any() else 0.0
        entries.append({'index': index, 'max_deficit_on_inner': deficit, 'passed': deficit <= 1e-12})
    leak = float(np.max(chi[~near])) if (~near).any() else 0.0
    summary = {'C': C, 'grad_max': cutoff.grad_max, 'grad_bound': 100 * C, 'leak_outside': leak,
               'range_ok': bool(chi.min() >= 0 and chi.max() <= 1)}
    report = CheckReport.from_entries('cutoff', entries, summary)
    report.passed = report.passed and leak == 0.0 and cutoff.grad_max <= 100 * C and summary['range_ok']
    return report


@dataclass(frozen=True, eq=False)
class AnalyticPatchSet:
    """Holomorphic patches f_lambda sampled on S_1 with the weld parameters M and B"""
    config: Configuration
    patches: Dict[int, ComplexField]
    M: float
    B: float
    holomorphy_factor: float = GLUE_DEFAULTS['holomorphy_factor']

    def __post_init__(self):
        if sorted(self.patches) != list(range(len(self.config))):
            raise PatchInputError(f"expected patches for indices 0..{len(self.config) - 1}, "
                                  f"got {sorted(self.patches)}")
        for index, patch in self.patches.items():
            if patch.grid.square != PATCH_SQUARE:
                raise PatchInputError(f"patch {index} must live on S_1 centered at 0")

    @property
    def log_patch_bound(self) -> float:
        """log of exp(2^{1-B} M)"""
        return 2.0 ** (1.0 - self.B) * self.M

    def log_sups(self) -> Dict[int, float]:
        with np.errstate(divide='ignore'):
            return {i: float(np.log(sup_norm(p))) for i, p in self.patches.items()}

    def hypotheses(self) -> CheckReport:
        """M > 40 log C, patch bound and holomorphy, each with its margin"""
        C = self.config.C
        entries = [{'hypothesis': 'M > 40 log C', 'value': self.M, 'bound': 40 * math.log(C),
                    'margin': self.M - 40 * math.log(C), 'passed': self.M > 40 * math.log(C)}]
        for index, patch in self.patches.items():
            log_sup = float(np.log(sup_norm(patch))) if sup_norm(patch) > 0 else -math.inf
            entries.append({'hypothesis': 'log sup|f| <= 2^{1-B} M', 'index': index, 'value': log_sup,
                            'bound': self.log_patch_bound, 'margin': self.log_patch_bound - log_sup,
                            'passed': log_sup <= self.log_patch_bound})
            h = patch.grid.h
            defect = sup_norm(dbar_fd(patch))
            allowed = self.holomorphy_factor * h * h * sup_norm(patch)
            entries.append({'hypothesis': 'holomorphic patch', 'index': index, 'value': defect,
                            'bound': allowed, 'margin': allowed - defect, 'passed': defect <= allowed})
        return CheckReport.from_entries('hypotheses', entries, {'C': C, 'B': self.B, 'M': self.M})

    def validate(self):
        report = self.hypotheses()
        for entry in report.entries:
            if entry['passed']:
                continue
            if entry['hypothesis'] == 'M > 40 log C':
                raise HypothesisError(f"M = {self.M:g} must exceed 40 log C = {entry['bound']:.6g}")
            raise PatchInputError(f"patch {entry['index']}: {entry['hypothesis']} fails "
                                  f"({entry['value']:.6g} vs {entry['bound']:.6g})")

    def subharmonic_patch_set(self) -> SubharmonicPatchSet:
        """u_lambda = log+|f_lambda| with the same M"""
        return SubharmonicPatchSet(self.config, {i: log_plus_modulus(p) for i, p in self.patches.items()},
                                   self.M)

    @classmethod
    def from_functions(cls, config: Configuration, fns: Sequence[Callable], M: float, B: float,
                       n: int = GRID_DEFAULTS['patch_n']) -> 'AnalyticPatchSet':
        if len(fns) != len(config):
            raise PatchInputError(f"{len(fns)} patch functions for {len(config)} points")
        patches = {i: sample(PATCH_SQUARE, n, fn, kind='complex') for i, fn in enumerate(fns)}
        return cls(config, patches, M, B)


def default_weld_M(C: float, B: float, log_sups: Sequence[float]) -> float:
    """Smallest comfortable M: max(400, 1.01 * 40 log C, 1.01 * 2^{B-1} * max log sup|f|)"""
    finite = [s for s in log_sups if math.isfinite(s)]
    patch_term = 1.01 * 2.0 ** (B - 1.0) * max(finite) if finite else 0.0
    return max(400.0, 1.01 * 40.0 * math.log(C), patch_term)


def weld_grid(config: Configuration, margin: Optional[float] = None,
              nodes_per_unit: Optional[int] = None) -> Grid:
    """Bounding square of the S_1 squares plus a margin, h <= 1/(32C), odd node count"""
    margin = GRID_DEFAULTS['weld_margin'] if margin is None else margin
    nodes_per_unit = nodes_per_unit or GRID_DEFAULTS['weld_nodes_per_unit']
    grid = Grid.for_spacing(config.bounding_square(margin), 1.0 / (nodes_per_unit * config.C))
    if grid.n % 2 == 0:
        grid = Grid(grid.square, grid.n + 1)
    return grid


def _window_union(grid: Grid, config: Configuration) -> np.ndarray:
    union = np.zeros(grid.shape, dtype=bool)
    for index in range(len(config)):
        union |= square_mask(grid, config.window(index)).mask
    return union


def shifted_patches(ps: AnalyticPatchSet, grid: Grid, max_workers: Optional[int] = None) -> np.ndarray:
    """g0 = sum of f_lambda(z - lambda) 1_{S_1(lambda)}(z), cubic interpolation of each patch"""

    def evaluate(index: int) -> Tuple[np.ndarray, np.ndarray]:
        mask = square_mask(grid, ps.config.window(index)).mask
        interp = FieldInterpolator(ps.patches[index], order=3, outside=0.0)
        return mask, interp(grid.Z[mask] - ps.config.points[index])

    g0 = np.zeros(grid.shape, dtype=complex)
    for mask, values in map_ordered(evaluate, range(len(ps.config)), max_workers, label='patch'):
        g0[mask] = values
    return g0


def assemble_g(ps: AnalyticPatchSet, cutoff: Cutoff, g0: Optional[np.ndarray] = None,
               max_workers: Optional[int] = None) -> ComplexField:
    """
    g = g0 * chi, with g0 from shifted_patches unless given

    Raises:
        GeometryError: chi is positive outside the union of the S_1(lambda)
    """
    grid = cutoff.grid
    chi = cutoff.chi.values
    stray = (chi > 0) & ~_window_union(grid, ps.config)
    if stray.any():
        iy, ix = np.argwhere(stray)[0]
        raise GeometryError(f"cutoff support leaves the windows at {int(stray.sum())} nodes, "
                            f"first at z = {grid.Z[iy, ix]:.6g}")
    if g0 is None:
        g0 = shifted_patches(ps, grid, max_workers)
    return ComplexField(grid, g0 * chi)


def cauchy_transform(rhs: ComplexField) -> ComplexField:
    """(1/pi) sum_w rhs(w) w_q / (z - w) over the grid, self term dropped"""
    grid = rhs.grid
    n, h = grid.n, grid.h
    d = np.arange(-(n - 1), n) * h
    offsets = d[None, :] + 1j * d[:, None]
    with np.errstate(divide='ignore', invalid='ignore'):
        kernel = np.where(offsets == 0, 0.0, 1.0 / (math.pi * offsets))
    values = signal.fftconvolve(rhs.values * grid.quadrature_weights(), kernel, mode='same')
    return ComplexField(grid, values)


def _periodic_dbar(values: np.ndarray, h: float) -> np.ndarray:
    """Central-difference dbar on a torus"""
    dx = (np.roll(values, -1, axis=1) - np.roll(values, 1, axis=1)) / (2 * h)
    dy = (np.roll(values, -1, axis=0) - np.roll(values, 1, axis=0)) / (2 * h)
    return 0.5 * (dx + 1j * dy)


def _periodic_inverse(residual: np.ndarray, h: float) -> Tuple[np.ndarray, complex]:
    """
    Spectral inverse of the torus dbar on the nonzero modes

    Returns:
        (correction, mean) where mean is the part of the residual on the
        zero modes of the symbol, left for the caller
    """
    ny, nx = residual.shape
    sx = np.sin(2 * np.pi * np.fft.fftfreq(nx))[None, :]
    sy = np.sin(2 * np.pi * np.fft.fftfreq(ny))[:, None]
    symbol = (1j * sx - sy) / (2 * h)
    spectrum = np.fft.fft2(residual)
    zero = np.abs(symbol) * h < 1e-12
    solved = np.zeros_like(spectrum)
    solved[~zero] = spectrum[~zero] / symbol[~zero]
    return np.fft.ifft2(solved), complex(spectrum[0, 0] / residual.size)


def _interior_residual(alpha: np.ndarray, rhs: ComplexField) -> np.ndarray:
    residual = rhs.values - dbar_fd(ComplexField(rhs.grid, alpha)).values
    residual[0, :] = residual[-1, :] = 0
    residual[:, 0] = residual[:, -1] = 0
    return residual


def _relative(residual: np.ndarray, scale: float) -> float:
    return float(np.max(np.abs(residual))) / scale


def _lsqr_correction(residual: np.ndarray, h: float, iterations: int) -> np.ndarray:
    """Least-squares correction of the interior residual with the sparse difference operator"""
    n = residual.shape[0]
    d1 = sparse.diags([-1.0, 1.0], [-1, 1], shape=(n, n)) / (2 * h)
    eye = sparse.identity(n)
    dx = sparse.kron(eye, d1, format='csr')
    dy = sparse.kron(d1, eye, format='csr')
    interior = np.zeros((n, n), dtype=bool)
    interior[1:-1, 1:-1] = True
    rows = np.flatnonzero(interior)
    dx, dy = dx[rows], dy[rows]
    operator = 0.5 * sparse.bmat([[dx, -dy], [dy, dx]], format='csr')
    target = residual.ravel()[rows]
    solution = lsqr(operator, np.concatenate([target.real, target.imag]), iter_lim=iterations)[0]
    size = n * n
    return (solution[:size] + 1j * solution[size:]).reshape(n, n)


@dataclass(frozen=True, eq=False)
class PolynomialPart:
    """Holomorphic polynomial in the scaled variable s = (z - center)/scale, Arnoldi basis"""
    center: complex
    scale: float
    q0: float
    hessenberg: np.ndarray
    coefficients: np.ndarray

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def basis(self, z) -> np.ndarray:
        s = (np.asarray(z, dtype=complex) - self.center) / self.scale
        columns = [np.full(s.shape, self.q0, dtype=complex)]
        H = self.hessenberg
        for k in range(self.degree):
            v = s * columns[k]
            for j in range(k + 1):
                v = v - H[j, k] * columns[j]
            columns.append(v / H[k + 1, k])
        return np.stack(columns, axis=-1)

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if self.degree < 0:
            return np.zeros(z.shape, dtype=complex)
        return self.basis(z) @ self.coefficients

    @classmethod
    def zero(cls, center: complex = 0j, scale: float = 1.0) -> 'PolynomialPart':
        return cls(center, scale, 1.0, np.zeros((1, 0), dtype=complex), np.zeros(0, dtype=complex))


def _weighted_arnoldi(s: np.ndarray, w: np.ndarray, degree: int) -> Tuple[np.ndarray, float, np.ndarray]:
    """Orthonormal polynomial basis on the nodes s under weights w, with its recurrence"""

    def dot(a: np.ndarray, b: np.ndarray) -> complex:
        return complex(np.sum(w * np.conj(a) * b))

    q0 = 1.0 / math.sqrt(float(np.sum(w)))
    columns = [np.full(s.shape, q0, dtype=complex)]
    H = np.zeros((degree + 1, degree), dtype=complex)
    for k in range(degree):
        v = s * columns[k]
        for _ in range(2):
            for j in range(k + 1):
                c = dot(columns[j], v)
                H[j, k] += c
                v = v - c * columns[j]
        norm = math.sqrt(max(dot(v, v).real, 0.0))
        if norm <= 1e-14 * math.sqrt(float(np.sum(w * np.abs(s * columns[k]) ** 2))):
            H = H[:k + 1, :k]
            break
        H[k + 1, k] = norm
        columns.append(v / norm)
    return np.stack(columns, axis=-1), q0, H


def hormander_log_weight(u: np.ndarray, grid: Grid) -> np.ndarray:
    """log of w_q e^{-u} / (1 + |z|^2)^2"""
    with np.errstate(divide='ignore'):
        return np.log(grid.quadrature_weights()) - u - 2.0 * np.log1p(np.abs(grid.Z) ** 2)


def weighted_log_norm(values: np.ndarray, log_weight: np.ndarray) -> float:
    """log of sum |values|^2 * weight, computed in log space"""
    with np.errstate(divide='ignore'):
        terms = 2.0 * np.log(np.abs(values)) + log_weight
    finite = terms[np.isfinite(terms)]
    if finite.size == 0:
        return -math.inf
    return float(logsumexp(finite))


@dataclass(frozen=True, eq=False)
class DbarSolution:
    alpha: ComplexField
    particular: ComplexField
    polynomial: PolynomialPart
    offset: complex
    residual_history: List[float]
    polished: bool
    log_alpha_norm: float
    log_particular_norm: float
    log_cauchy_norm: float
    log_rhs_norm: float

    @property
    def residual(self) -> float:
        return self.residual_history[-1]

    @property
    def slack(self) -> float:
        """Relative excess of the alpha norm over half the rhs norm"""
        if self.log_rhs_norm == -math.inf:
            return 0.0 if self.log_alpha_norm == -math.inf else math.inf
        return math.expm1(self.log_alpha_norm - self.log_rhs_norm + math.log(2.0))

    @property
    def status(self) -> str:
        if self.slack <= 0:
            return 'holds'
        if self.slack <= CERTIFICATE_SLACK:
            return 'below_resolution'
        return 'fails'

    def to_dict(self) -> Dict:
        return {
            'residual_history': self.residual_history,
            'polished': self.polished,
            'polynomial_degree': self.polynomial.degree,
            'log_alpha_norm': self.log_alpha_norm,
            'log_particular_norm': self.log_particular_norm,
            'log_cauchy_norm': self.log_cauchy_norm,
            'log_rhs_norm': self.log_rhs_norm,
            'slack': self.slack,
            'status': self.status,
        }


def solve_dbar_min(rhs: ComplexField, u: RealField, solver: Optional[SolverConfig] = None) -> DbarSolution:
    """
    Approximately minimal solution of dbar alpha = rhs in L^2(e^{-u} / (1 + |z|^2)^2)

    The Cauchy transform of rhs seeds the iteration; defect correction with
    the spectral inverse on a zero-padded torus drives the interior residual
    down, LSQR polishes if it stalls, and the weighted projection onto
    polynomials of degree <= solver.degree is subtracted at the end.

    Args:
        rhs: Right-hand side, vanishing near the grid border
        u: Weight exponent on the same grid (+inf allowed)
        solver: Solver settings

    Returns:
        DbarSolution with certificates in log space

    Raises:
        DbarSolverError: interior residual above tolerance after polishing
    """
    solver = solver or SolverConfig()
    grid = rhs.grid
    if u.grid != grid:
        raise ValueError("rhs and weight live on different grids")
    n, h = grid.n, grid.h
    log_weight = hormander_log_weight(np.asarray(u.values, dtype=float), grid)
    log_rhs_norm = weighted_log_norm(rhs.values, log_weight + 2.0 * np.log1p(np.abs(grid.Z) ** 2))
    center, scale = grid.square.center, grid.square.half_edge

    scale_rhs = float(np.max(np.abs(rhs.values)))
    if scale_rhs == 0.0:
        zero = ComplexField(grid, np.zeros(grid.shape, dtype=complex))
        return DbarSolution(alpha=zero, particular=zero, polynomial=PolynomialPart.zero(center, scale),
                            offset=0j, residual_history=[0.0], polished=False,
                            log_alpha_norm=-math.inf, log_particular_norm=-math.inf,
                            log_cauchy_norm=-math.inf, log_rhs_norm=log_rhs_norm)

    cauchy = cauchy_transform(rhs).values
    alpha = cauchy.copy()
    history = [_relative(_interior_residual(alpha, rhs), scale_rhs)]

    padded_n = 2 * n + 1
    rhs_padded = np.zeros((padded_n, padded_n), dtype=complex)
    rhs_padded[:n, :n] = rhs.values
    conj_shift = np.conj(grid.Z - center)
    iterations = 0
    while history[-1] > solver.tolerance and iterations < solver.max_iterations:
        alpha_padded = np.zeros_like(rhs_padded)
        alpha_padded[:n, :n] = alpha
        correction, mean = _periodic_inverse(rhs_padded - _periodic_dbar(alpha_padded, h), h)
        alpha = (alpha_padded + correction)[:n, :n] + mean * conj_shift
        history.append(_relative(_interior_residual(alpha, rhs), scale_rhs))
        iterations += 1
        if history[-1] >= history[-2] * (1 - 1e-3):
            break

    polished = False
    if history[-1] > solver.tolerance and solver.lsqr_iterations > 0:
        logger.info(f"Defect correction stalled at {history[-1]:.3e}; polishing with LSQR")
        alpha = alpha + _lsqr_correction(_interior_residual(alpha, rhs), h, solver.lsqr_iterations)
        history.append(_relative(_interior_residual(alpha, rhs), scale_rhs))
        polished = True
    if history[-1] > solver.tolerance:
        raise DbarSolverError(f"interior residual {history[-1]:.3e} above tolerance {solver.tolerance:.1e}",
                              history)

    border = np.ones(grid.shape, dtype=bool)
    border[1:-1, 1:-1] = False
    particular = alpha
    offset = complex(np.mean(particular[border]))

    weight_mask = np.isfinite(log_weight)
    polynomial = PolynomialPart.zero(center, scale)
    if weight_mask.any() and solver.degree >= 0:
        w = np.exp(log_weight[weight_mask] - log_weight[weight_mask].max())
        keep = w > 0
        s = (grid.Z[weight_mask][keep] - center) / scale
        Q, q0, H = _weighted_arnoldi(s, w[keep], solver.degree)
        coeffs = Q.conj().T @ (w[keep] * particular[weight_mask][keep])
        peak = float(np.max(np.abs(coeffs)))
        coeffs[np.abs(coeffs) < solver.coefficient_rtol * peak] = 0
        polynomial = PolynomialPart(center, scale, q0, H, coeffs)
    alpha = particular - polynomial(grid.Z)

    solution = DbarSolution(
        alpha=ComplexField(grid, alpha),
        particular=ComplexField(grid, particular),
        polynomial=polynomial,
        offset=offset,
        residual_history=history,
        polished=polished,
        log_alpha_norm=weighted_log_norm(alpha, log_weight),
        log_particular_norm=weighted_log_norm(particular, log_weight),
        log_cauchy_norm=weighted_log_norm(cauchy, log_weight),
        log_rhs_norm=log_rhs_norm,
    )
    logger.info(f"dbar solve: residual {solution.residual:.3e} after {len(history)} measurements, "
                f"certificate {solution.status} (slack {solution.slack:.3e})")
    return solution


@dataclass(frozen=True, eq=False)
class GlueResult:
    """Welded field f = g - alpha with everything needed to audit it"""
    patch_set: AnalyticPatchSet
    f: ComplexField
    g: ComplexField
    g0: np.ndarray
    cutoff: Cutoff
    subharmonic: SubharmonicGlueResult
    solution: DbarSolution
    tau: float
    tau_target: float
    fit_residual: float
    a_sets: Dict[int, RasterSet] = field(default_factory=dict)
    e1_eps: float = GLUE_DEFAULTS['e1_eps']

    @property
    def grid(self) -> Grid:
        return self.f.grid

    @property
    def alpha(self) -> ComplexField:
        return self.solution.alpha

    @property
    def dbar_residual(self) -> float:
        return self.solution.residual

    @property
    def weighted_alpha_norm(self) -> float:
        """log of the weighted alpha integral"""
        return self.solution.log_alpha_norm

    @property
    def rhs_weighted_norm(self) -> float:
        """log of the weighted dbar g integral"""
        return self.solution.log_rhs_norm

    def evaluate(self, points) -> np.ndarray:
        """f at arbitrary points: cubic interpolation on the grid, polynomial part beyond it"""
        points = np.asarray(points, dtype=complex)
        inside = self.grid.square.contains(points, tol=1e-9 * self.grid.h)
        values = np.empty(points.shape, dtype=complex)
        if inside.any():
            values[inside] = FieldInterpolator(self.f, order=3)(points[inside])
        if (~inside).any():
            values[~inside] = self.solution.polynomial(points[~inside]) - self.solution.offset
        return values


def glue_entire(ps: AnalyticPatchSet, subharmonic: Optional[SubharmonicGlueResult] = None,
                grid: Optional[Grid] = None, solver: Optional[SolverConfig] = None,
                e1_eps: float = GLUE_DEFAULTS['e1_eps'], max_workers: Optional[int] = None) -> GlueResult:
    """
    Weld the patches into one entire function

    Args:
        ps: Analytic patches with M and B
        subharmonic: Glued u from log+|f_lambda| on the weld grid (computed when omitted)
        grid: Weld grid (bounding square + margin at h <= 1/(32C) by default)
        solver: dbar solver settings
        e1_eps: Erosion radius of the E1 measure statement
        max_workers: Worker cap for per-patch work

    Returns:
        GlueResult

    Raises:
        HypothesisError: M <= 40 log C
    """
    ps.validate()
    config = ps.config
    C = config.C
    if subharmonic is not None:
        grid = subharmonic.grid
    grid = grid or weld_grid(config)
    subharmonic = subharmonic or glue_subharmonic(ps.subharmonic_patch_set(), grid=grid,
                                                  max_workers=max_workers)

    cutoff = build_cutoff(subharmonic.d_sets, C, grid)
    g0 = shifted_patches(ps, grid, max_workers)
    g = assemble_g(ps, cutoff, g0=g0)
    rhs = dbar_fd(g)
    solution = solve_dbar_min(rhs, subharmonic.u, solver)
    f = ComplexField(grid, g.values - solution.alpha.values)

    solver = solver or SolverConfig()
    scale = max(1.0, float(np.max(np.abs(g.values))))
    fit_residual = max(solution.residual, solver.coefficient_rtol) * scale
    tau_target = math.exp(-ps.M / 4.0)
    tau = max(tau_target, 10.0 * fit_residual)

    diff = np.abs(f.values - g0)
    a_sets = {}
    for index in range(len(config)):
        window = square_mask(grid, config.window(index)).mask
        a_sets[index] = RasterSet(grid, window & (diff < tau))

    logger.info(f"Welded {len(config)} patches at C={C}, B={ps.B}, M={ps.M}: tau={tau:.3e}")
    return GlueResult(patch_set=ps, f=f, g=g, g0=g0, cutoff=cutoff, subharmonic=subharmonic,
                      solution=solution, tau=tau, tau_target=tau_target, fit_residual=fit_residual,
                      a_sets=a_sets, e1_eps=e1_eps)


def check_E1(result: GlueResult, eps: Optional[float] = None) -> CheckReport:
    """D^{-1/4C} inside A_lambda and m(S_1 minus A^{-eps}) <= 160/C + 200 eps"""
    eps = result.e1_eps if eps is None else eps
    config = result.patch_set.config
    C = config.C
    grid = result.grid
    bound = E1_MEASURE_CONSTANTS[0] / C + E1_MEASURE_CONSTANTS[1] * eps
    diff = np.abs(result.f.values - result.g0)
    entries = []
    for index, lam in enumerate(config.points):
        window = square_mask(grid, config.window(index))
        core = erode(result.subharmonic.d_sets[index], 1.0 / (4 * C))
        a_set = result.a_sets[index]
        bad = window.difference(erode(a_set, eps)).area()
        sup_core = float(np.max(diff[core.mask])) if not core.is_empty else 0.0
        contained = core.is_subset(a_set)
        entries.append({
            'index': index,
            'point': lam,
            'sup_diff_core': sup_core,
            'core_contained': contained,
            'bad_area': bad.value,
            'bad_area_error': bad.error,
            'bound': bound,
            'margin': bound - bad.upper,
            'passed': contained and bad.upper <= bound,
        })
    summary = {'tau': result.tau, 'tau_target': result.tau_target, 'fit_residual': result.fit_residual,
               'eps': eps, 'bound': bound}
    return CheckReport.from_entries('E1', entries, summary)


def check_E2(result: GlueResult) -> CheckReport:
    """log max over S_C of |f| <= 2^{1-B} M e^{pi C^2}, compared after one more log"""
    ps = result.patch_set
    C = ps.config.C
    grid = result.grid
    in_sc = Square(0j, C).contains(grid.Z, tol=1e-9 * grid.h)
    sup = float(np.max(np.abs(result.f.values[in_sc]))) if in_sc.any() else 0.0
    log_sup = math.log(sup) if sup > 0 else -math.inf
    log_log_bound = (1.0 - ps.B) * math.log(2.0) + math.log(ps.M) + math.pi * C * C
    margin = math.inf if log_sup <= 0 else log_log_bound - math.log(log_sup)
    summary = {'log_sup': log_sup, 'log_log_bound': log_log_bound, 'log_margin': margin}
    return CheckReport(name='E2', passed=margin >= 0, summary=summary)


def check_rhs_certificate(result: GlueResult) -> CheckReport:
    """integral of |dbar g|^2 e^{-u} <= C^4 e^{-M/2}, in log space"""
    C, M = result.patch_set.config.C, result.patch_set.M
    log_bound = 4.0 * math.log(C) - M / 2.0
    log_value = result.rhs_weighted_norm
    summary = {'log_value': log_value, 'log_bound': log_bound, 'log_margin': log_bound - log_value}
    return CheckReport(name='rhs_certificate', passed=log_value <= log_bound, summary=summary)


def check_hormander(result: GlueResult) -> CheckReport:
    solution = result.solution
    summary = dict(solution.to_dict(), certificate_slack=CERTIFICATE_SLACK)
    return CheckReport(name='hormander', passed=solution.status != 'fails', summary=summary)


def check_holomorphy(result: GlueResult) -> CheckReport:
    """Interior sup |dbar f| <= solver residual + 50 h^2 sup |f|"""
    grid = result.grid
    h = grid.h
    defect = np.abs(dbar_fd(result.f).values[1:-1, 1:-1])
    rhs_scale = float(np.max(np.abs(dbar_fd(result.g).values)))
    sup_f = float(np.max(np.abs(result.f.values)))
    allowed = result.dbar_residual * rhs_scale + result.patch_set.holomorphy_factor * h * h * sup_f
    summary = {'max_defect': float(defect.max()) if defect.size else 0.0, 'allowed': allowed}
    return CheckReport(name='holomorphy', passed=summary['max_defect'] <= allowed, summary=summary)


def check_dbar_support(result: GlueResult) -> CheckReport:
    """dbar g lives in the union of D^{+3/4C} minus D^{+1/4C}, one stencil width of slack"""
    C = result.patch_set.config.C
    grid = result.grid
    rhs = np.abs(dbar_fd(result.g).values)
    peak = float(rhs.max())
    support = rhs > 1e-8 * peak if peak > 0 else np.zeros(grid.shape, dtype=bool)
    allowed = np.zeros(grid.shape, dtype=bool)
    band = 2.0 * grid.h
    for d_set in result.subharmonic.d_sets.values():
        outer = dilate(d_set, 3.0 / (4 * C) + band).mask
        inner = dilate(d_set, max(0.0, 1.0 / (4 * C) - band)).mask
        allowed |= outer & ~inner
    stray = int(np.sum(support & ~allowed))
    return CheckReport(name='dbar_support', passed=stray == 0,
                       summary={'support_nodes': int(support.sum()), 'stray_nodes': stray})


def check_entire_glue(result: GlueResult) -> Dict[str, CheckReport]:
    return {
        'hypotheses': result.patch_set.hypotheses(),
        'cutoff': check_cutoff(result.cutoff, result.subharmonic.d_sets),
        'E1': check_E1(result),
        'E2': check_E2(result),
        'rhs_certificate': check_rhs_certificate(result),
        'hormander': check_hormander(result),
        'holomorphy': check_holomorphy(result),
        'dbar_support': check_dbar_support(result),
    }


def resolution_stability(ps: AnalyticPatchSet, solver: Optional[SolverConfig] = None,
                         grid: Optional[Grid] = None) -> CheckReport:
    """Weld at h and h/2; the E1 core sups must change by less than a factor of 2"""
    grid = grid or weld_grid(ps.config)
    coarse = check_E1(glue_entire(ps, grid=grid, solver=solver))
    fine = check_E1(glue_entire(ps, grid=grid.refine(), solver=solver))
    entries = []
    for a, b in zip(coarse.entries, fine.entries):
        lo, hi = sorted((a['sup_diff_core'], b['sup_diff_core']))
        ratio = hi / lo if lo > 0 else (1.0 if hi == 0 else math.inf)
        # both at the rounding floor counts as stable
        stable = ratio < 2.0 or hi <= 10.0 * coarse.summary['fit_residual']
        entries.append({'index': a['index'], 'coarse': a['sup_diff_core'], 'fine': b['sup_diff_core'],
                        'ratio': ratio, 'passed': stable})
    return CheckReport.from_entries('resolution_stability', entries, {'n_coarse': grid.n,
                                                                       'n_fine': grid.refine().n})
