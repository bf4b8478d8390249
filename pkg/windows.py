"""
Window functions of a separated point configuration
Strip function b_C, per-point windows v_lambda, the odd-integer grid v_0 and
the assembled window field v with its P1-P3 checks
"""
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from artifact_manager import map_ordered
from errors import ConfigurationError
from fields import (Grid, LogField, RasterSet, RealField, Square, dilate, lipschitz_estimate,
                    square_mask, subharmonicity_report)
from report_utils import CheckReport
from solver_config import GRID_DEFAULTS, WINDOW_DEFAULTS
from utils import log_cosh, make_rng

logger = logging.getLogger(__name__)

LATTICE_SPACING = 2.5
LATTICE_JITTER = 0.2


@dataclass(frozen=True)
class Configuration:
    """Points with pairwise sup-norm distance > 2, optional class labels, window constant C"""
    points: Tuple[complex, ...]
    C: float
    labels: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, 'points', tuple(complex(p) for p in self.points))
        if self.labels is not None:
            object.__setattr__(self, 'labels', tuple(int(label) for label in self.labels))
            if len(self.labels) != len(self.points):
                raise ConfigurationError(
                    f"{len(self.labels)} labels for {len(self.points)} points", path='labels')
        if not (self.C >= 1):
            raise ConfigurationError(f"C must be >= 1, got {self.C}", path='C')
        self.validate()

    def validate(self):
        """Raise on the first pair closer than 2 in the sup norm"""
        if len(self.points) < 2:
            return
        pts = self.array
        dx = np.abs(pts.real[:, None] - pts.real[None, :])
        dy = np.abs(pts.imag[:, None] - pts.imag[None, :])
        sep = np.maximum(dx, dy)
        np.fill_diagonal(sep, np.inf)
        if sep.min() <= 2:
            i, j = sorted(np.unravel_index(int(np.argmin(sep)), sep.shape))
            raise ConfigurationError(
                f"points {i} ({self.points[i]}) and {j} ({self.points[j]}) are "
                f"{sep[i, j]:.6g} apart in the sup norm; need > 2", path='points')

    @property
    def array(self) -> np.ndarray:
        return np.array(self.points, dtype=complex)

    def __len__(self) -> int:
        return len(self.points)

    def label_of(self, index: int) -> int:
        return self.labels[index] if self.labels is not None else 0

    def window(self, index: int) -> Square:
        return Square(self.points[index], 1.0)

    def bounding_square(self, margin: float = 0.0) -> Square:
        """Smallest centered square containing every S_1(lambda), expanded by margin"""
        if not self.points:
            return Square(0j, 1.0 + margin)
        pts = self.array
        x0, x1 = pts.real.min() - 1, pts.real.max() + 1
        y0, y1 = pts.imag.min() - 1, pts.imag.max() + 1
        center = complex((x0 + x1) / 2, (y0 + y1) / 2)
        return Square(center, max(x1 - x0, y1 - y0) / 2 + margin)

    def without(self, index: int) -> 'Configuration':
        keep = [i for i in range(len(self.points)) if i != index]
        labels = tuple(self.labels[i] for i in keep) if self.labels is not None else None
        return Configuration(tuple(self.points[i] for i in keep), self.C, labels)

    def with_C(self, C: float) -> 'Configuration':
        return Configuration(self.points, C, self.labels)

    @classmethod
    def random(cls, count: int, C: float, seed: int = 0, extent: Optional[float] = None,
               rng: Optional[np.random.Generator] = None, labels: int = 0) -> 'Configuration':
        """
        Perturbed-lattice configuration

        Lattice sites 2.5 apart inside [-extent, extent]^2 are drawn without
        replacement and jittered by at most 0.2 per axis, so separation stays > 2.

        Args:
            count: Number of points
            C: Window constant
            seed: Seed of the generator (ignored when rng is given)
            extent: Half edge of the sampling box (sized to fit count by default)
            rng: Generator to draw from
            labels: If positive, attach labels drawn from 1..labels

        Returns:
            Configuration with the requested number of points
        """
        rng = rng if rng is not None else make_rng(seed)
        if count == 0:
            return cls((), C)
        if extent is None:
            extent = LATTICE_SPACING * math.ceil(math.sqrt(count)) / 2 + 1
        k_max = int(math.floor((extent - LATTICE_JITTER) / LATTICE_SPACING))
        ticks = LATTICE_SPACING * np.arange(-k_max, k_max + 1)
        sites = (ticks[None, :] + 1j * ticks[:, None]).ravel()
        if sites.size < count:
            raise ConfigurationError(
                f"extent {extent} holds only {sites.size} lattice sites, {count} requested", path='extent')
        chosen = sites[rng.choice(sites.size, size=count, replace=False)]
        jitter = rng.uniform(-LATTICE_JITTER, LATTICE_JITTER, size=(count, 2))
        points = chosen + jitter[:, 0] + 1j * jitter[:, 1]
        label_values = tuple(int(v) for v in rng.integers(1, labels + 1, size=count)) if labels > 0 else None
        return cls(tuple(points), C, label_values)


def _as_array(z) -> np.ndarray:
    return np.asarray(z, dtype=complex)


def _scalar_or_array(values: np.ndarray, z):
    return float(values) if np.ndim(z) == 0 else values


def log_base_window(z, C: float):
    """log b_C(z); -inf outside the open strip |Im z| < 1/C"""
    z = _as_array(z)
    x, y = z.real, z.imag
    inside = np.abs(y) < 1.0 / C
    k = math.pi * C / 2.0
    with np.errstate(divide='ignore', invalid='ignore'):
        value = np.log(np.cos(k * np.where(inside, y, 0.0))) + log_cosh(k * x)
    return np.where(inside, value, -np.inf)


def base_window(z, C: float):
    """b_C(z) = cos(pi C y / 2) cosh(pi C x / 2) on |y| < 1/C, 0 otherwise"""
    values = np.exp(log_base_window(z, C))
    return _scalar_or_array(values, z)


def _branch_arguments(z, lam) -> Tuple[np.ndarray, ...]:
    w = _as_array(z) - complex(lam)
    # strips along the left, bottom, right and top edges of S_1(lambda)
    return (1j * (w + 1), w + 1j, 1j * (w - 1), w - 1j)


def log_window_fn(z, lam: complex, C: float):
    branches = [log_base_window(arg, C) for arg in _branch_arguments(z, lam)]
    return np.maximum.reduce(branches)


def window_fn(z, lam: complex, C: float):
    """v_lambda(z): max of the four edge-strip branches; zero on S_1^{-1/C}(lambda)"""
    values = np.exp(log_window_fn(z, lam, C))
    return _scalar_or_array(values, z)


def _nearest_odd(t: np.ndarray) -> np.ndarray:
    return 2.0 * np.floor(t / 2.0) + 1.0


def log_grid_fn(z, C: float):
    """log v_0(z): 2 pi C + strip branches along every odd horizontal and vertical line"""
    z = _as_array(z)
    x, y = z.real, z.imag
    horizontal = log_base_window(x + 1j * (y - _nearest_odd(y)), C)
    vertical = log_base_window(y + 1j * (x - _nearest_odd(x)), C)
    return 2.0 * math.pi * C + np.maximum(horizontal, vertical)


def grid_fn(z, C: float):
    """v_0(z); may overflow to inf far from the origin at large C"""
    with np.errstate(over='ignore'):
        values = np.exp(log_grid_fn(z, C))
    return _scalar_or_array(values, z)


def a_set(lam: complex) -> List[complex]:
    """Even-lattice points omega whose S_1(omega) overlaps S_1(lambda) with nonempty interior"""
    lam = complex(lam)

    def axis(t: float) -> List[float]:
        base = 2 * math.floor(t / 2)
        return [e for e in (base - 2, base, base + 2, base + 4) if abs(e - t) < 2]

    return [complex(ex, ey) for ey in axis(lam.imag) for ex in axis(lam.real)]


def b_sets(config: Configuration) -> Dict[complex, List[int]]:
    """omega -> indices of the points lambda with omega in A_lambda"""
    result: Dict[complex, List[int]] = {}
    for index, lam in enumerate(config.points):
        for omega in a_set(lam):
            result.setdefault(omega, []).append(index)
    return dict(sorted(result.items(), key=lambda item: (item[0].imag, item[0].real)))


@dataclass(frozen=True, eq=False)
class WindowSystem:
    """Window field v (stored as log v) with its zero windows D_lambda"""
    config: Configuration
    grid: Grid
    log_v: LogField
    d_sets: Dict[int, RasterSet]
    a_sets: Dict[int, List[complex]]
    b_sets: Dict[complex, List[int]]

    @property
    def v(self) -> RealField:
        return self.log_v.exp()

    def window_mask(self, index: int) -> RasterSet:
        return square_mask(self.grid, self.config.window(index))

    def window_inside_grid(self, index: int) -> bool:
        sq = self.config.window(index)
        return bool(self.grid.square.contains(sq.corners(), tol=1e-9).all())


def _cell_slices(axis_values: np.ndarray) -> Dict[int, slice]:
    """Even-lattice cell index of every node along one axis, as contiguous slices"""
    cells = np.rint(axis_values / 2.0).astype(int)
    slices: Dict[int, slice] = {}
    for k in np.unique(cells):
        idx = np.nonzero(cells == k)[0]
        slices[int(k)] = slice(int(idx[0]), int(idx[-1]) + 1)
    return slices


def build_window_system(config: Configuration, grid: Optional[Grid] = None,
                        nodes_per_unit: Optional[int] = None, margin: Optional[float] = None,
                        max_workers: Optional[int] = None) -> WindowSystem:
    """
    Assemble v = max(v_0, max over B^omega of v_lambda) cell by cell

    Args:
        config: Separated configuration
        grid: Sampling grid (bounding square of the windows plus margin by default)
        nodes_per_unit: Resolution factor, h <= 1/(nodes_per_unit * C)
        margin: Margin around the windows for the default grid
        max_workers: Worker cap for the per-cell assembly

    Returns:
        WindowSystem with log v and the D_lambda rasters
    """
    config.validate()
    C = config.C
    if grid is None:
        nodes_per_unit = nodes_per_unit or GRID_DEFAULTS['window_nodes_per_unit']
        margin = GRID_DEFAULTS['window_margin'] if margin is None else margin
        grid = Grid.for_window(C, config.bounding_square(margin), nodes_per_unit)

    Z = grid.Z
    log_v = np.array(log_grid_fn(Z, C))
    cells = b_sets(config)
    x_slices = _cell_slices(grid.xs)
    y_slices = _cell_slices(grid.ys)

    work = []
    for omega, members in cells.items():
        kx, ky = int(round(omega.real / 2)), int(round(omega.imag / 2))
        if kx in x_slices and ky in y_slices:
            work.append((y_slices[ky], x_slices[kx], members))

    def assemble(item):
        rows, cols, members = item
        block = Z[rows, cols]
        local = log_v[rows, cols]
        for index in members:
            local = np.maximum(local, log_window_fn(block, config.points[index], C))
        return local

    blocks = map_ordered(assemble, work, max_workers, label='window cell')
    for (rows, cols, _), block in zip(work, blocks):
        log_v[rows, cols] = block

    field_log_v = LogField(grid, log_v)
    zero = np.isneginf(log_v)
    d_sets = {}
    for index in range(len(config)):
        window = square_mask(grid, config.window(index))
        d_sets[index] = RasterSet(grid, zero & window.mask)

    a_sets = {index: a_set(lam) for index, lam in enumerate(config.points)}
    logger.info(f"Window system: {len(config)} points, C={C}, grid {grid.n}^2, h={grid.h:.4g}")
    return WindowSystem(config=config, grid=grid, log_v=field_log_v, d_sets=d_sets,
                        a_sets=a_sets, b_sets=cells)


def check_P1(ws: WindowSystem) -> CheckReport:
    """Window area against 1 - 80/C, D^{+1/C} inside S_1, intruding pieces <= 20"""
    C = ws.config.C
    bound = 1.0 - 80.0 / C
    entries = []
    for index, lam in enumerate(ws.config.points):
        window = ws.window_mask(index)
        d_set = ws.d_sets[index]
        measure = d_set.area()
        fraction = measure.value / 4.0
        contained = dilate(d_set, 1.0 / C).is_subset(window)
        _, intruders = window.difference(d_set).components()
        inside = ws.window_inside_grid(index)
        entries.append({
            'index': index,
            'point': lam,
            'area_fraction': fraction,
            'area_error': measure.error / 4.0,
            'bound': bound,
            'margin': fraction + measure.error / 4.0 - bound,
            'dilation_contained': contained,
            'intruders': intruders,
            'window_inside_grid': inside,
            'passed': inside and contained and intruders <= 20 and fraction + measure.error / 4.0 >= bound,
        })
    return CheckReport.from_entries('P1', entries, {'C': C, 'bound': bound})


def check_P2(ws: WindowSystem) -> CheckReport:
    """log v(z) <= 2 pi C + pi C |z| / 2 at every node"""
    C = ws.config.C
    Z = ws.grid.Z
    log_bound = 2 * math.pi * C + math.pi * C / 2 * np.abs(Z)
    slack = 1e-12 * np.abs(log_bound)
    margin = log_bound - ws.log_v.values
    violations = int(np.sum(margin < -slack))
    entries = []
    for index, lam in enumerate(ws.config.points):
        mask = ws.window_mask(index).mask
        local = margin[mask]
        entries.append({'index': index, 'point': lam,
                        'min_log_margin': float(local.min()) if local.size else math.inf,
                        'passed': bool(np.all(local >= -slack[mask]))})
    iy, ix = ws.grid.nearest_index(0j)
    summary = {
        'C': C,
        'violations': violations,
        'min_log_margin': float(margin.min()),
        'log_v_at_origin_node': float(ws.log_v.values[iy, ix]),
        'log_bound_at_origin': 2 * math.pi * C,
    }
    report = CheckReport.from_entries('P2', entries, summary)
    report.passed = report.passed and violations == 0
    return report


def check_P3(ws: WindowSystem, tol_factor: float = WINDOW_DEFAULTS['tol_factor']) -> CheckReport:
    """v >= 1/2 on D^{+5/3C} minus D^{+1/3C}, up to tol_factor * h * local Lipschitz"""
    C = ws.config.C
    h = ws.grid.h
    with np.errstate(over='ignore'):
        v = np.minimum(np.exp(ws.log_v.values), 1e12)
    lip = lipschitz_estimate(v, h)
    entries = []
    for index, lam in enumerate(ws.config.points):
        d_set = ws.d_sets[index]
        if d_set.is_empty:
            entries.append({'index': index, 'point': lam, 'vacuous': True, 'passed': True})
            continue
        ring = dilate(d_set, 5.0 / (3 * C)).difference(dilate(d_set, 1.0 / (3 * C)))
        values = v[ring.mask]
        tol = tol_factor * h * lip[ring.mask]
        slack = values - (0.5 - tol)
        worst = int(np.argmin(slack))
        entries.append({
            'index': index,
            'point': lam,
            'ring_nodes': ring.count,
            'min_value': float(values.min()),
            'tolerance_at_min': float(tol[worst]),
            'min_margin': float(values.min() - 0.5),
            'passed': bool(np.all(slack >= 0)),
        })
    return CheckReport.from_entries('P3', entries, {'C': C, 'tol_factor': tol_factor})


def check_subharmonic(ws: WindowSystem, radius_nodes: float = WINDOW_DEFAULTS['subharmonic_radius_nodes'],
                      tol_factor: float = WINDOW_DEFAULTS['tol_factor']) -> CheckReport:
    report = subharmonicity_report(ws.log_v, radius_nodes * ws.grid.h, tol_factor)
    return CheckReport(name='subharmonic', passed=report.passed, entries=[], summary=report.to_dict())


def check_window_system(ws: WindowSystem) -> Dict[str, CheckReport]:
    return {
        'P1': check_P1(ws),
        'P2': check_P2(ws),
        'P3': check_P3(ws),
        'subharmonic': check_subharmonic(ws),
    }


def points_from_spec(spec: str, C: float, seed: int, extent: Optional[float] = None) -> Configuration:
    """
    Parse a points option

    Args:
        spec: 'random:N', 'grid:K' (K x K lattice with spacing 2.5) or 'file:path.json'
        C: Window constant
        seed: Seed for random placements
        extent: Sampling box half edge for random placements

    Returns:
        Configuration
    """
    kind, _, arg = spec.partition(':')
    if kind == 'random':
        try:
            count = int(arg)
        except ValueError:
            raise ConfigurationError(f"expected random:N, got {spec!r}", path='points')
        return Configuration.random(count, C, seed=seed, extent=extent)
    if kind == 'grid':
        try:
            k = int(arg)
        except ValueError:
            raise ConfigurationError(f"expected grid:K, got {spec!r}", path='points')
        ticks = LATTICE_SPACING * (np.arange(k) - (k - 1) / 2)
        return Configuration(tuple((ticks[None, :] + 1j * ticks[:, None]).ravel()), C)
    if kind == 'file':
        try:
            data = json.loads(Path(arg).read_text(encoding='utf-8'))
        except FileNotFoundError:
            raise ConfigurationError(f"points file not found: {arg}", path='points')
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"malformed JSON at line {e.lineno} column {e.colno}: {e.msg}",
                                     path='points')
        if isinstance(data, dict):
            data = data.get('points', [])
        if not isinstance(data, list):
            raise ConfigurationError("expected a list of [x, y] pairs", path='points')
        points = []
        for i, item in enumerate(data):
            if not (isinstance(item, (list, tuple)) and len(item) == 2):
                raise ConfigurationError(f"expected [x, y], got {item!r}", path=f'points[{i}]')
            points.append(complex(float(item[0]), float(item[1])))
        return Configuration(tuple(points), C)
    raise ConfigurationError(f"unknown points spec {spec!r}", path='points')
