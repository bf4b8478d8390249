"""
Square domains, sampled fields and raster sets
Numeric substrate for the window, gluing and construction modules
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.interpolate import RectBivariateSpline, RegularGridInterpolator

from errors import EvaluationError, ResolutionError

logger = logging.getLogger(__name__)

# Relative slack (in grid spacings) for distance comparisons on the raster
RASTER_SLACK = 1e-9


@dataclass(frozen=True)
class Square:
    """Closed square S_a(center) = center + [-a, a]^2"""
    center: complex = 0j
    half_edge: float = 1.0

    def __post_init__(self):
        if not (self.half_edge > 0):
            raise ValueError(f"half_edge must be positive, got {self.half_edge}")
        object.__setattr__(self, 'center', complex(self.center))
        object.__setattr__(self, 'half_edge', float(self.half_edge))

    @property
    def area(self) -> float:
        return (2.0 * self.half_edge) ** 2

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        """(x0, x1, y0, y1)"""
        c, a = self.center, self.half_edge
        return (c.real - a, c.real + a, c.imag - a, c.imag + a)

    def contains(self, z, tol: float = 0.0):
        w = np.asarray(z) - self.center
        return np.maximum(np.abs(np.real(w)), np.abs(np.imag(w))) <= self.half_edge + tol

    def corners(self) -> np.ndarray:
        a = self.half_edge
        return self.center + np.array([-a - 1j * a, a - 1j * a, a + 1j * a, -a + 1j * a])

    def translate(self, w: complex) -> 'Square':
        return Square(self.center + w, self.half_edge)

    def expand(self, eps: float) -> 'Square':
        return Square(self.center, self.half_edge + eps)

    def shrink(self, eps: float) -> 'Square':
        return Square(self.center, self.half_edge - eps)


@dataclass(frozen=True)
class Grid:
    """Node-centered uniform grid on a square, corners included"""
    square: Square
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"grid needs at least 2 samples per edge, got {self.n}")
        object.__setattr__(self, 'n', int(self.n))

    @property
    def h(self) -> float:
        return 2.0 * self.square.half_edge / (self.n - 1)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n, self.n)

    @cached_property
    def xs(self) -> np.ndarray:
        x0, x1, _, _ = self.square.bounds
        return np.linspace(x0, x1, self.n)

    @cached_property
    def ys(self) -> np.ndarray:
        _, _, y0, y1 = self.square.bounds
        return np.linspace(y0, y1, self.n)

    @cached_property
    def Z(self) -> np.ndarray:
        """Complex node coordinates, row index = y, column index = x"""
        return self.xs[None, :] + 1j * self.ys[:, None]

    def quadrature_weights(self) -> np.ndarray:
        """Midpoint weights h^2, halved on edges and quartered at corners"""
        w = np.full(self.shape, self.h ** 2)
        w[0, :] *= 0.5
        w[-1, :] *= 0.5
        w[:, 0] *= 0.5
        w[:, -1] *= 0.5
        return w

    def refine(self) -> 'Grid':
        """Same square, half the spacing"""
        return Grid(self.square, 2 * self.n - 1)

    def fractional_index(self, z) -> Tuple[np.ndarray, np.ndarray]:
        """(row, column) coordinates of points in index units"""
        z = np.asarray(z)
        x0, _, y0, _ = self.square.bounds
        return (np.imag(z) - y0) / self.h, (np.real(z) - x0) / self.h

    def nearest_index(self, z) -> Tuple[np.ndarray, np.ndarray]:
        fy, fx = self.fractional_index(z)
        iy = np.clip(np.rint(fy), 0, self.n - 1).astype(int)
        ix = np.clip(np.rint(fx), 0, self.n - 1).astype(int)
        return iy, ix

    @classmethod
    def for_spacing(cls, square: Square, h_max: float) -> 'Grid':
        """Smallest grid on the square with spacing at most h_max"""
        n = int(math.ceil(2.0 * square.half_edge / h_max - 1e-9)) + 1
        return cls(square, max(n, 2))

    @classmethod
    def for_window(cls, C: float, square: Optional[Square] = None, nodes_per_unit: int = 8) -> 'Grid':
        """Default window resolution h <= 1/(nodes_per_unit * C)"""
        square = square or Square(0j, 1.0)
        return cls.for_spacing(square, 1.0 / (nodes_per_unit * C))


@dataclass(frozen=True)
class Measure:
    """Raster area with its +-(perimeter * h) error bar"""
    value: float
    error: float

    @property
    def lower(self) -> float:
        return max(0.0, self.value - self.error)

    @property
    def upper(self) -> float:
        return self.value + self.error


@dataclass(frozen=True, eq=False)
class Field:
    """Function sampled on every node of a grid"""
    grid: Grid
    values: np.ndarray

    KIND = 'real'
    DTYPE = np.float64

    def __post_init__(self):
        values = np.array(self.values, dtype=self.DTYPE, copy=True)
        if values.shape != self.grid.shape:
            raise ValueError(f"expected {self.grid.shape} values, got {values.shape}")
        if np.isnan(values).any():
            raise ValueError(f"{self.KIND} field contains NaN")
        self._check_infinities(values)
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    def _check_infinities(self, values: np.ndarray):
        if np.isneginf(values).any():
            raise ValueError(f"{self.KIND} field contains -inf")
        if np.isposinf(values).any():
            logger.warning(f"{self.KIND} field saturated: {int(np.isposinf(values).sum())} nodes exceed the float range")

    @property
    def kind(self) -> str:
        return self.KIND

    @property
    def saturated(self) -> bool:
        return bool(np.isinf(self.values).any())

    def with_values(self, values: np.ndarray) -> 'Field':
        return type(self)(self.grid, values)

    def magnitudes(self) -> np.ndarray:
        return np.abs(self.values)


class RealField(Field):
    KIND = 'real'
    DTYPE = np.float64


class ComplexField(Field):
    KIND = 'complex'
    DTYPE = np.complex128

    def _check_infinities(self, values: np.ndarray):
        if not np.isfinite(values).all():
            raise ValueError("complex field contains non-finite values")


class LogField(Field):
    """Logarithm of a nonnegative function; -inf marks zeros"""
    KIND = 'logreal'
    DTYPE = np.float64

    def _check_infinities(self, values: np.ndarray):
        if np.isposinf(values).any():
            raise ValueError("log field contains +inf")

    def exp(self) -> RealField:
        with np.errstate(over='ignore'):
            return RealField(self.grid, np.exp(self.values))

    def magnitudes(self) -> np.ndarray:
        with np.errstate(over='ignore'):
            return np.exp(self.values)

    def zero_set(self) -> 'RasterSet':
        return RasterSet(self.grid, np.isneginf(self.values))


FIELD_KINDS = {cls.KIND: cls for cls in (RealField, ComplexField, LogField)}


@dataclass(frozen=True, eq=False)
class RasterSet:
    """Set of grid nodes"""
    grid: Grid
    mask: np.ndarray

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool, copy=True)
        if mask.shape != self.grid.shape:
            raise ValueError(f"expected mask of shape {self.grid.shape}, got {mask.shape}")
        mask.setflags(write=False)
        object.__setattr__(self, 'mask', mask)

    @classmethod
    def empty(cls, grid: Grid) -> 'RasterSet':
        return cls(grid, np.zeros(grid.shape, dtype=bool))

    @classmethod
    def full(cls, grid: Grid) -> 'RasterSet':
        return cls(grid, np.ones(grid.shape, dtype=bool))

    @classmethod
    def from_square(cls, grid: Grid, square: Square) -> 'RasterSet':
        return cls(grid, square.contains(grid.Z, tol=RASTER_SLACK * grid.h))

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    @property
    def is_empty(self) -> bool:
        return not self.mask.any()

    def _same_grid(self, other: 'RasterSet'):
        if other.grid != self.grid:
            raise ValueError("raster sets live on different grids")

    def union(self, other: 'RasterSet') -> 'RasterSet':
        self._same_grid(other)
        return RasterSet(self.grid, self.mask | other.mask)

    def intersection(self, other: 'RasterSet') -> 'RasterSet':
        self._same_grid(other)
        return RasterSet(self.grid, self.mask & other.mask)

    def difference(self, other: 'RasterSet') -> 'RasterSet':
        self._same_grid(other)
        return RasterSet(self.grid, self.mask & ~other.mask)

    __or__ = union
    __and__ = intersection
    __sub__ = difference

    def complement(self) -> 'RasterSet':
        return RasterSet(self.grid, ~self.mask)

    def is_subset(self, other: 'RasterSet') -> bool:
        self._same_grid(other)
        return not (self.mask & ~other.mask).any()

    def boundary_edges(self) -> int:
        """Member/non-member adjacencies, grid border counted as non-member"""
        padded = np.pad(self.mask, 1, constant_values=False).astype(np.int8)
        return int(np.abs(np.diff(padded, axis=0)).sum() + np.abs(np.diff(padded, axis=1)).sum())

    def area(self) -> Measure:
        h = self.grid.h
        return Measure(self.count * h * h, self.boundary_edges() * h * h)

    def components(self) -> Tuple[np.ndarray, int]:
        """4-connected component labels and their count"""
        labels, count = ndimage.label(self.mask)
        return labels, int(count)


def square_mask(grid: Grid, square: Square) -> RasterSet:
    return RasterSet.from_square(grid, square)


def sample(square: Square, n: int, fn: Callable, kind: Optional[str] = None) -> Field:
    """
    Sample a pointwise function on every node of the grid over a square

    Args:
        square: Domain
        n: Samples per edge
        fn: Function of a complex argument; vectorised calls are tried first
        kind: Force 'real' or 'complex'; inferred from the values otherwise

    Returns:
        RealField or ComplexField
    """
    grid = Grid(square, n)
    Z = grid.Z
    try:
        values = np.asarray(fn(Z))
        if values.shape != Z.shape:
            values = np.broadcast_to(values, Z.shape)
    except (TypeError, ValueError):
        values = np.vectorize(fn)(Z)

    bad = ~np.isfinite(values)
    if bad.any():
        iy, ix = np.argwhere(bad)[0]
        raise EvaluationError(
            f"non-finite value {values[iy, ix]} at node ({ix}, {iy}), z = {Z[iy, ix]:.6g}")

    if kind is None:
        kind = 'complex' if np.iscomplexobj(values) else 'real'
    if kind == 'real' and np.iscomplexobj(values):
        if np.any(values.imag != 0):
            raise EvaluationError("real field requested for a complex-valued function")
        values = values.real
    return FIELD_KINDS[kind](grid, values)


def _distance_to_members(mask: np.ndarray) -> np.ndarray:
    """Euclidean distance (in grid spacings) from every node to the nearest member"""
    if not mask.any():
        return np.full(mask.shape, np.inf)
    return ndimage.distance_transform_edt(~mask)


def dilate(s: RasterSet, eps: float) -> RasterSet:
    """Nodes within distance eps of a member node"""
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    if s.is_empty or eps == 0:
        return s
    h = s.grid.h
    dist = _distance_to_members(s.mask) * h
    return RasterSet(s.grid, dist <= eps + RASTER_SLACK * h)


def erode(s: RasterSet, eps: float) -> RasterSet:
    """Members whose eps-ball avoids the complement; outside the grid counts as complement"""
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    if s.is_empty:
        return s
    h = s.grid.h
    padded = np.pad(s.mask, 1, constant_values=False)
    # distance to the complement node minus one spacing bounds the distance to its boundary
    clearance = (ndimage.distance_transform_edt(padded)[1:-1, 1:-1] - 1.0) * h
    return RasterSet(s.grid, s.mask & (clearance > eps + RASTER_SLACK * h))


def lipschitz_estimate(values: np.ndarray, h: float, radius: int = 1) -> np.ndarray:
    """Node-wise gradient magnitude, maximised over a (2r+1)^2 neighbourhood"""
    gy, gx = np.gradient(np.asarray(values, dtype=float), h, h)
    slope = np.hypot(np.abs(gx), np.abs(gy))
    return ndimage.maximum_filter(slope, size=2 * radius + 1, mode='nearest')


def _finite_real_values(u: Field) -> np.ndarray:
    if isinstance(u, ComplexField):
        raise TypeError("subharmonicity is tested on real fields")
    if isinstance(u, LogField):
        finite = u.values[np.isfinite(u.values)]
        if finite.size == 0:
            return np.zeros(u.grid.shape)
        # sub-mean-value test is invariant under positive scaling
        with np.errstate(under='ignore'):
            return np.exp(u.values - finite.max())
    if u.saturated:
        raise ValueError("field is saturated; test its log-domain version instead")
    return np.asarray(u.values, dtype=float)


def _circle_means(values: np.ndarray, h: float, r: float) -> Tuple[np.ndarray, slice]:
    n = values.shape[0]
    rr = r / h
    m = int(math.ceil(rr - 1e-9))
    inner = slice(m, n - m)
    if n - 2 * m <= 0:
        return np.zeros((0, 0)), inner
    k_count = max(16, int(math.ceil(2 * math.pi * r / h)))
    iy, ix = np.mgrid[m:n - m, m:n - m].astype(float)
    acc = np.zeros(iy.shape)
    for k in range(k_count):
        theta = 2.0 * math.pi * k / k_count
        coords = np.array([iy + rr * math.sin(theta), ix + rr * math.cos(theta)])
        acc += ndimage.map_coordinates(values, coords, order=1, mode='nearest')
    return acc / k_count, inner


def subharmonicity_defect(u: Field, r: float) -> float:
    """
    Largest violation of the sub-mean-value inequality on r-circles

    Args:
        u: Real or log-domain field
        r: Circle radius, at least two grid spacings

    Returns:
        max over testable nodes of u(center) - mean of u on the circle (0 if none)
    """
    h = u.grid.h
    if r < 2 * h * (1 - 1e-9):
        raise ResolutionError(f"circle radius {r:.4g} below 2h = {2 * h:.4g}")
    values = _finite_real_values(u)
    means, inner = _circle_means(values, h, r)
    if means.size == 0:
        return 0.0
    return float(np.max(values[inner, inner] - means))


@dataclass(frozen=True)
class SubharmonicityReport:
    max_defect: float
    max_ratio: float
    tested_nodes: int
    radius: float
    passed: bool

    def to_dict(self) -> dict:
        return {'max_defect': self.max_defect, 'max_ratio': self.max_ratio,
                'tested_nodes': self.tested_nodes, 'radius': self.radius, 'passed': self.passed}


def subharmonicity_report(u: Field, r: float, tol_factor: float = 10.0) -> SubharmonicityReport:
    """Sub-mean-value test with node-wise tolerance tol_factor * h * local Lipschitz estimate"""
    h = u.grid.h
    if r < 2 * h * (1 - 1e-9):
        raise ResolutionError(f"circle radius {r:.4g} below 2h = {2 * h:.4g}")
    values = _finite_real_values(u)
    means, inner = _circle_means(values, h, r)
    if means.size == 0:
        return SubharmonicityReport(0.0, 0.0, 0, r, True)
    radius_nodes = int(math.ceil(r / h)) + 1
    lip = lipschitz_estimate(values, h, radius=radius_nodes)[inner, inner]
    floor = 1e-12 * max(1.0, float(np.max(np.abs(values))))
    tol = tol_factor * h * lip + floor
    defect = values[inner, inner] - means
    ratio = defect / tol
    return SubharmonicityReport(
        max_defect=float(defect.max()),
        max_ratio=float(ratio.max()),
        tested_nodes=int(defect.size),
        radius=float(r),
        passed=bool(np.all(defect <= tol)),
    )


def dbar_fd(g: Field) -> ComplexField:
    """1/2 (d/dx + i d/dy) g; central inside, second-order one-sided on the border"""
    if g.grid.n < 3:
        raise ResolutionError("dbar_fd needs at least 3 samples per edge")
    h = g.grid.h
    values = np.asarray(g.values, dtype=complex)
    dy, dx = np.gradient(values, h, h, edge_order=2)
    return ComplexField(g.grid, 0.5 * (dx + 1j * dy))


def sup_norm(f: Field, region: Optional[RasterSet] = None) -> float:
    """max |value| over region (whole grid by default)"""
    mags = f.magnitudes()
    if region is None:
        return float(np.max(mags))
    if region.grid != f.grid:
        raise ValueError("region and field live on different grids")
    if region.is_empty:
        raise ValueError("sup_norm over an empty region")
    return float(np.max(mags[region.mask]))


class FieldInterpolator:
    """Off-node evaluation of a field; NaN (or `outside`) beyond the grid square"""

    def __init__(self, f: Field, order: int = 1, outside: complex = np.nan):
        if order not in (1, 3):
            raise ValueError("interpolation order must be 1 or 3")
        self.field = f
        self.order = order
        self.outside = outside
        grid = f.grid
        parts = [np.real(f.values)]
        if isinstance(f, ComplexField):
            parts.append(np.imag(f.values))
        if order == 1:
            self._parts = [RegularGridInterpolator((grid.ys, grid.xs), p, method='linear',
                                                   bounds_error=False, fill_value=np.nan)
                           for p in parts]
        else:
            self._parts = [RectBivariateSpline(grid.ys, grid.xs, p, kx=3, ky=3) for p in parts]

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        shape = z.shape
        flat = z.ravel()
        inside = self.field.grid.square.contains(flat, tol=RASTER_SLACK * self.field.grid.h)
        ys, xs = np.imag(flat), np.real(flat)
        x0, x1, y0, y1 = self.field.grid.square.bounds
        ys_c, xs_c = np.clip(ys, y0, y1), np.clip(xs, x0, x1)
        if self.order == 1:
            pts = np.column_stack([ys_c, xs_c])
            out = [p(pts) for p in self._parts]
        else:
            out = [p.ev(ys_c, xs_c) for p in self._parts]
        if len(out) == 2:
            values = np.where(inside, out[0] + 1j * out[1], self.outside)
        else:
            values = np.where(inside, out[0], np.real(self.outside))
        return values.reshape(shape)
