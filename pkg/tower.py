"""
Finite Rokhlin-tower model of a free plane action
Scale sequence a_n, tube measures, Hausdorff distance, delta-fine partitions,
epsilon-nets, generated tower models, lattice base towers and their nested refinement
"""
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import integrate
from scipy.spatial.distance import cdist

from artifact_manager import map_ordered
from errors import ConfigurationError, CoverError
from fields import Square
from report_utils import CheckReport, create_report_frame
from solver_config import TOWER_DEFAULTS
from utils import make_rng
from windows import Configuration

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ASequence:
    """a_1 = 1, a_n = ratio_n * a_{n-1}"""
    values: Tuple[float, ...]
    tail_sum: float
    hypothesis_ok: bool
    D: float
    ratio_override: Optional[float] = None

    def __getitem__(self, n: int) -> float:
        if n < 1 or n > len(self.values):
            raise IndexError(f"a_{n} is outside 1..{len(self.values)}")
        return self.values[n - 1]

    def __len__(self) -> int:
        return len(self.values)

    def ratio(self, n: int) -> float:
        """a_n / a_{n-1}"""
        return self[n] / self[n - 1]


def level_ratio(D: float, n: int) -> float:
    return D * n * math.log(n) ** 2


def a_sequence(D: float, N: int, ratio_override: Optional[float] = None) -> ASequence:
    """
    The scales a_n with a_n / a_{n-1} = D n log^2 n (natural log), or a constant ratio

    Args:
        D: Growth constant
        N: Number of levels
        ratio_override: Constant ratio replacing D n log^2 n

    Returns:
        ASequence with the tail sum of a_n / a_{n+1} and the < 1/2 flag
    """
    if not D > 0:
        raise ConfigurationError(f"D must be positive, got {D}", path='D')
    if N < 1:
        raise ConfigurationError(f"N must be >= 1, got {N}", path='levels')
    values = [1.0]
    for n in range(2, N + 1):
        ratio = ratio_override if ratio_override is not None else level_ratio(D, n)
        values.append(values[-1] * ratio)
    tail_sum = math.fsum(values[i] / values[i + 1] for i in range(N - 1))
    ok = tail_sum < 0.5
    if not ok:
        logger.warning(f"sum of a_n/a_(n+1) = {tail_sum:.4g} is not below 1/2")
    return ASequence(tuple(values), tail_sum, ok, D, ratio_override)


# Regions

def _clip_rect(rect: Tuple[float, float, float, float], square: Square) -> Optional[Tuple[float, ...]]:
    x0, x1, y0, y1 = square.bounds
    r = (max(rect[0], x0), min(rect[1], x1), max(rect[2], y0), min(rect[3], y1))
    return r if r[0] < r[1] and r[2] < r[3] else None


def _union_length(intervals: List[Tuple[float, float]]) -> float:
    total, end = 0.0, -math.inf
    for lo, hi in sorted(intervals):
        if hi <= end:
            continue
        total += hi - max(lo, end)
        end = hi
    return total


@dataclass(frozen=True)
class RectRegion:
    """Union of axis-aligned rectangles (x0, x1, y0, y1)"""
    rects: Tuple[Tuple[float, float, float, float], ...] = ()

    def __post_init__(self):
        cleaned = tuple(tuple(float(v) for v in r) for r in self.rects if r[0] < r[1] and r[2] < r[3])
        object.__setattr__(self, 'rects', cleaned)

    @classmethod
    def from_square(cls, square: Square) -> 'RectRegion':
        return cls((square.bounds,))

    def area(self) -> float:
        """Union area by a sweep over x-events with merged active y-intervals"""
        if not self.rects:
            return 0.0
        xs = sorted({r[0] for r in self.rects} | {r[1] for r in self.rects})
        total = 0.0
        for left, right in zip(xs[:-1], xs[1:]):
            active = [(r[2], r[3]) for r in self.rects if r[0] <= left and r[1] >= right]
            if active:
                total += (right - left) * _union_length(active)
        return total

    def clip(self, square: Square) -> 'RectRegion':
        return RectRegion(tuple(r for r in (_clip_rect(rect, square) for rect in self.rects) if r))

    def area_within(self, square: Square) -> float:
        return self.clip(square).area()

    def exceeds(self, square: Square) -> bool:
        return self.area() > self.area_within(square) * (1 + 1e-12) + 1e-300

    def union(self, other: 'RectRegion') -> 'RectRegion':
        return RectRegion(self.rects + other.rects)

    def intersection(self, other: 'RectRegion') -> 'RectRegion':
        pieces = []
        for a in self.rects:
            for b in other.rects:
                pieces.append((max(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), min(a[3], b[3])))
        return RectRegion(tuple(pieces))

    def difference_area(self, other: 'RectRegion') -> float:
        """m(self minus other)"""
        return self.union(other).area() - other.area()

    def contained_in(self, other: 'RectRegion', tol: float = 1e-9) -> bool:
        return self.difference_area(other) <= tol * max(1.0, self.area())

    def translate(self, dx: float, dy: float) -> 'RectRegion':
        return RectRegion(tuple((r[0] + dx, r[1] + dx, r[2] + dy, r[3] + dy) for r in self.rects))


@dataclass(frozen=True)
class DiscRegion:
    center: complex
    radius: float

    def area(self) -> float:
        return math.pi * self.radius ** 2

    def area_within(self, square: Square) -> float:
        """Exact when the disc lies in the square, by quadrature of clipped chords otherwise"""
        x0, x1, y0, y1 = square.bounds
        cx, cy, r = self.center.real, self.center.imag, self.radius
        if x0 <= cx - r and cx + r <= x1 and y0 <= cy - r and cy + r <= y1:
            return self.area()
        lo, hi = max(x0, cx - r), min(x1, cx + r)
        if lo >= hi:
            return 0.0

        def chord(x: float) -> float:
            half = math.sqrt(max(r * r - (x - cx) ** 2, 0.0))
            return max(0.0, min(cy + half, y1) - max(cy - half, y0))

        value, _ = integrate.quad(chord, lo, hi, limit=200)
        return value

    def exceeds(self, square: Square) -> bool:
        return self.area_within(square) < self.area() * (1 - 1e-12)


@dataclass(frozen=True)
class AnnulusComplement:
    """Part of the ambient square outside the open disc: |z - center| >= radius"""
    center: complex
    radius: float

    def area_within(self, square: Square) -> float:
        return square.area - DiscRegion(self.center, self.radius).area_within(square)

    def exceeds(self, square: Square) -> bool:
        return False


def tube_measure(region, square: Square, tower_mass: float) -> float:
    """
    mu(A B) = m(A) / m(S) * mu(S B)

    Args:
        region: Any region with area_within(square) and exceeds(square)
        square: The tower square S
        tower_mass: mu(S B)

    Returns:
        Measure of the tube over the part of the region inside S
    """
    if region.exceeds(square):
        logger.warning("region exceeds the tower square; clipped to it")
    return region.area_within(square) / square.area * tower_mass


# Hausdorff distance, partitions and nets

def _as_points(a) -> np.ndarray:
    pts = np.asarray(a, dtype=complex).ravel()
    return np.column_stack([pts.real, pts.imag])


def hausdorff(a, b) -> float:
    """Euclidean Hausdorff distance between nonempty finite sets of complex points"""
    pa, pb = _as_points(a), _as_points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("Hausdorff distance needs nonempty sets")
    d = cdist(pa, pb)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def set_distance(a, b) -> float:
    """Hausdorff distance extended by d(empty, empty) = 0 and d(empty, A) = inf"""
    empty_a, empty_b = np.size(a) == 0, np.size(b) == 0
    if empty_a and empty_b:
        return 0.0
    if empty_a or empty_b:
        return math.inf
    return hausdorff(a, b)


FiberSets = Sequence[Sequence[np.ndarray]]


@dataclass
class Partition:
    """Cells of fiber indices; representative = lowest index in the cell"""
    cells: List[List[int]]
    delta: float
    k_prev: int

    @property
    def representatives(self) -> List[int]:
        return [min(cell) for cell in self.cells]

    def cell_of(self) -> Dict[int, int]:
        return {i: c for c, cell in enumerate(self.cells) for i in cell}

    def verify(self, fibers: FiberSets) -> CheckReport:
        """Exhaustive pairwise check of max_l f_l < delta inside every cell"""
        entries = []
        for c, cell in enumerate(self.cells):
            worst = 0.0
            for pos, i in enumerate(cell):
                for j in cell[pos + 1:]:
                    for l in range(self.k_prev):
                        worst = max(worst, set_distance(fibers[i][l], fibers[j][l]))
            entries.append({'cell': c, 'size': len(cell), 'max_distance': worst, 'passed': worst < self.delta})
        return CheckReport.from_entries('partition', entries, {'delta': self.delta, 'cells': len(self.cells)})

    def to_dict(self) -> Dict[str, Any]:
        return {'delta': self.delta, 'k_prev': self.k_prev, 'cells': self.cells,
                'representatives': self.representatives}


def _greedy_cover(sets: Sequence[np.ndarray], radius: float) -> np.ndarray:
    """Ball labels: the lowest unassigned index takes every unassigned set closer than radius"""
    labels = np.full(len(sets), -1, dtype=int)
    ball = 0
    for i in range(len(sets)):
        if labels[i] >= 0:
            continue
        labels[i] = ball
        for j in range(i + 1, len(sets)):
            if labels[j] < 0 and set_distance(sets[i], sets[j]) < radius:
                labels[j] = ball
        ball += 1
    return labels


def delta_fine_partition(fibers: FiberSets, delta: float, k_prev: int,
                         max_workers: Optional[int] = None) -> Partition:
    """
    Partition fibers so every cell is delta-fine for every label

    Args:
        fibers: fibers[i][l] = points of fiber i with label l (absolute coordinates)
        delta: Fineness
        k_prev: Number of labels
        max_workers: Worker cap for the per-label covers

    Returns:
        Common refinement of the greedy delta/2 covers
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    for i, fiber in enumerate(fibers):
        if len(fiber) != k_prev:
            raise ValueError(f"fiber {i} carries {len(fiber)} label sets, expected {k_prev}")
    per_label = map_ordered(lambda l: _greedy_cover([f[l] for f in fibers], delta / 2),
                            range(k_prev), max_workers, label='label cover')
    cells: Dict[Tuple[int, ...], List[int]] = {}
    for i in range(len(fibers)):
        key = tuple(int(labels[i]) for labels in per_label)
        cells.setdefault(key, []).append(i)
    partition = Partition(list(cells.values()), delta, k_prev)
    logger.info(f"delta-fine partition: {len(fibers)} fibers -> {len(partition.cells)} cells (delta={delta:g})")
    return partition


def grid_cover(bounds: Tuple[float, float, float, float], eps: float) -> List[Tuple[float, float, float, float]]:
    """Closed square cells of diameter < eps covering the box"""
    x0, x1, y0, y1 = bounds
    side = eps / math.sqrt(2.0) * (1 - 1e-9)
    nx = max(1, int(math.ceil((x1 - x0) / side)))
    ny = max(1, int(math.ceil((y1 - y0) / side)))
    return [(x0 + i * side, x0 + (i + 1) * side, y0 + j * side, y0 + (j + 1) * side)
            for j in range(ny) for i in range(nx)]


@dataclass
class EpsilonNet:
    signatures: List[Tuple[bool, ...]]
    representatives: List[int]
    groups: Dict[Tuple[bool, ...], List[int]]
    eps: float

    def verify(self, sets: Sequence[np.ndarray]) -> CheckReport:
        entries = []
        for sig, members in self.groups.items():
            worst = 0.0
            for pos, i in enumerate(members):
                for j in members[pos + 1:]:
                    worst = max(worst, hausdorff(sets[i], sets[j]))
            entries.append({'representative': members[0], 'size': len(members), 'max_distance': worst,
                            'passed': worst <= self.eps})
        return CheckReport.from_entries('epsilon_net', entries, {'eps': self.eps, 'net_size': len(self.groups)})


def epsilon_net(sets: Sequence[np.ndarray], eps: float,
                cover: Sequence[Tuple[float, float, float, float]]) -> EpsilonNet:
    """
    Group sets by which cover cells they meet; one representative per signature

    Raises:
        CoverError: a point lies in no cell, or a cell is not finer than eps
    """
    cells = np.asarray(cover, dtype=float)
    diam = np.hypot(cells[:, 1] - cells[:, 0], cells[:, 3] - cells[:, 2])
    if (diam >= eps).any():
        raise CoverError(f"cover cell {int(np.argmax(diam))} has diameter {diam.max():.4g} >= eps = {eps:g}")
    signatures = []
    groups: Dict[Tuple[bool, ...], List[int]] = {}
    for i, s in enumerate(sets):
        pts = _as_points(s)
        inside = ((pts[:, None, 0] >= cells[None, :, 0]) & (pts[:, None, 0] <= cells[None, :, 1])
                  & (pts[:, None, 1] >= cells[None, :, 2]) & (pts[:, None, 1] <= cells[None, :, 3]))
        uncovered = ~inside.any(axis=1)
        if uncovered.any():
            p = pts[int(np.argmax(uncovered))]
            raise CoverError(f"point ({p[0]:.6g}, {p[1]:.6g}) of set {i} lies in no cover cell")
        sig = tuple(bool(v) for v in inside.any(axis=0))
        signatures.append(sig)
        groups.setdefault(sig, []).append(i)
    return EpsilonNet(signatures, [members[0] for members in groups.values()], groups, eps)


# Tower models

@dataclass
class Fiber:
    """A base point of a class: jitter offsets of the class configuration (absolute units)"""
    index: int
    weight: float
    jitter: List[complex] = field(default_factory=list)


@dataclass
class TowerClass:
    """Class j of level n: configuration in S_{a_n/a_{n-1}} coordinates with target fibers and labels"""
    index: int
    mass: float
    points: List[complex] = field(default_factory=list)
    targets: List[int] = field(default_factory=list)
    labels: List[int] = field(default_factory=list)
    fibers: List[Fiber] = field(default_factory=list)
    coverage: float = 0.0

    def configuration(self, C: float) -> Configuration:
        return Configuration(tuple(self.points), C, tuple(self.labels) if self.labels else None)


@dataclass
class TowerLevel:
    n: int
    a: float
    classes: List[TowerClass] = field(default_factory=list)

    @property
    def mass(self) -> float:
        return math.fsum(c.mass for c in self.classes)

    @property
    def k(self) -> int:
        return len(self.classes)

    def fibers(self) -> List[Tuple[int, Fiber]]:
        """(class index, fiber) in global fiber order"""
        return [(c.index, fb) for c in self.classes for fb in c.fibers]


@dataclass
class TowerModel:
    D: float
    seed: int
    a: ASequence
    levels: List[TowerLevel] = field(default_factory=list)

    @property
    def N(self) -> int:
        return len(self.levels)

    def level(self, n: int) -> TowerLevel:
        return self.levels[n - 1]

    def fiber_sets(self, n: int, prev_cells: Optional[Dict[int, int]] = None,
                   k_prev: Optional[int] = None) -> List[List[np.ndarray]]:
        """
        R_n^l(x) for every level-n fiber x: absolute positions of its label-l points

        Labels are the model classes of the target level-(n-1) fibers unless prev_cells
        maps each level-(n-1) fiber to the partition cell that defines F_{n-1}^l.
        """
        if n < 2:
            raise ValueError("fiber configurations start at level 2")
        scale = self.a[n - 1]
        if prev_cells is None:
            k_prev = self.level(n - 1).k
        elif k_prev is None:
            k_prev = max(prev_cells.values(), default=-1) + 1
        result = []
        for c in self.level(n).classes:
            base = np.asarray(c.points, dtype=complex) * scale
            if prev_cells is None:
                labels = np.asarray(c.labels, dtype=int)
            else:
                labels = np.asarray([prev_cells[t] for t in c.targets], dtype=int)
            for fb in c.fibers:
                pts = base + np.asarray(fb.jitter, dtype=complex)
                result.append([pts[labels == l] for l in range(k_prev)])
        return result

    def validate(self) -> CheckReport:
        """Masses <= 1 and nondecreasing, separation > 2 after scaling, labels in range"""
        entries = []
        previous = 0.0
        for lvl in self.levels:
            ok_mass = lvl.mass <= 1 + 1e-12 and lvl.mass >= previous - 1e-12
            entries.append({'level': lvl.n, 'check': 'mass', 'value': lvl.mass, 'passed': ok_mass})
            previous = lvl.mass
            if lvl.n < 2:
                continue
            k_prev = self.level(lvl.n - 1).k
            for c in lvl.classes:
                try:
                    c.configuration(lvl.a / self.a[lvl.n - 1])
                    separated = True
                except ConfigurationError:
                    separated = False
                labels_ok = all(0 <= l < k_prev for l in c.labels)
                entries.append({'level': lvl.n, 'class': c.index, 'check': 'configuration',
                                'separated': separated, 'labels_ok': labels_ok,
                                'passed': separated and labels_ok})
        return CheckReport.from_entries('tower_model', entries)

    def to_dict(self) -> Dict[str, Any]:
        def pair(z: complex) -> List[float]:
            return [z.real, z.imag]

        return {
            'D': self.D,
            'seed': self.seed,
            'ratio_override': self.a.ratio_override,
            'levels': [{
                'n': lvl.n,
                'a': lvl.a,
                'classes': [{
                    'index': c.index,
                    'mass': c.mass,
                    'coverage': c.coverage,
                    'points': [pair(p) for p in c.points],
                    'targets': c.targets,
                    'labels': c.labels,
                    'fibers': [{'index': fb.index, 'weight': fb.weight,
                                'jitter': [pair(j) for j in fb.jitter]} for fb in c.fibers],
                } for c in lvl.classes],
            } for lvl in self.levels],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TowerModel':
        levels = []
        for lv in data['levels']:
            classes = []
            for c in lv['classes']:
                fibers = [Fiber(fb['index'], fb['weight'], [complex(*j) for j in fb['jitter']])
                          for fb in c['fibers']]
                classes.append(TowerClass(c['index'], c['mass'], [complex(*p) for p in c['points']],
                                          list(c['targets']), list(c['labels']), fibers, c.get('coverage', 0.0)))
            levels.append(TowerLevel(lv['n'], lv['a'], classes))
        a = a_sequence(data['D'], len(levels), data.get('ratio_override'))
        return cls(data['D'], data['seed'], a, levels)

    @classmethod
    def from_json(cls, text: str) -> 'TowerModel':
        return cls.from_dict(json.loads(text))


def level_mass(base_mass: float, n: int) -> float:
    """mu(S_{a_n} B_n): base_mass at n = 1, increasing to 1"""
    return 1.0 - (1.0 - base_mass) / n


def generate_tower_model(D: float = TOWER_DEFAULTS['D'], levels: int = TOWER_DEFAULTS['levels'],
                         classes: int = TOWER_DEFAULTS['classes'],
                         fibers_per_class: int = TOWER_DEFAULTS['fibers_per_class'],
                         points_per_class: int = TOWER_DEFAULTS['points_per_class'],
                         seed: int = 0, jitter: float = 1e-3, ratio_override: Optional[float] = None,
                         base_mass: float = 199.0 / 200.0) -> TowerModel:
    """
    Random tower model: per level, class templates from perturbed lattices
    with jittered copies as fibers

    Args:
        D: Growth constant of a_n
        levels: Number of levels N
        classes: Classes per level
        fibers_per_class: Fibers per class
        points_per_class: Configuration size of each class from level 2 on
        seed: Generator seed
        jitter: Per-point fiber offsets, absolute units, at most this per axis
        ratio_override: Constant a_n / a_{n-1}
        base_mass: mu(S_{a_1} B_1)

    Returns:
        TowerModel
    """
    rng = make_rng(seed)
    a = a_sequence(D, levels, ratio_override)
    model_levels: List[TowerLevel] = []
    fiber_class: List[int] = []
    for n in range(1, levels + 1):
        mass = level_mass(base_mass, n)
        level = TowerLevel(n, a[n])
        new_fiber_class: List[int] = []
        for j in range(classes):
            cls = TowerClass(j, mass / classes)
            if n >= 2:
                C = a[n] / a[n - 1]
                config = Configuration.random(points_per_class, C, rng=rng, extent=C - 1)
                cls.points = list(config.points)
                cls.targets = [int(t) for t in rng.integers(0, len(fiber_class), size=points_per_class)]
                cls.labels = [fiber_class[t] for t in cls.targets]
                cls.coverage = points_per_class * 4.0 / (2 * C) ** 2
            for f in range(fibers_per_class):
                offsets = []
                if cls.points:
                    raw = rng.uniform(-jitter, jitter, size=(len(cls.points), 2))
                    offsets = [complex(x, y) for x, y in raw]
                cls.fibers.append(Fiber(len(new_fiber_class), cls.mass / fibers_per_class, offsets))
                new_fiber_class.append(j)
            level.classes.append(cls)
        model_levels.append(level)
        fiber_class = new_fiber_class
    model = TowerModel(D, seed, a, model_levels)
    logger.info(f"Generated tower model: {levels} levels, {classes} classes, a_N = {a[levels]:.6g}")
    return model


# Lattice base towers and nested refinement

@dataclass
class LatticeTowers:
    """B_n(0) as the lattice offset_n + p_n Z^2 on a torus of side L, with q_n = L / p_n"""
    a: Tuple[float, ...]
    eps: Tuple[float, ...]
    L: float
    q: Tuple[int, ...]
    offsets: Tuple[Tuple[float, float], ...]

    @property
    def N(self) -> int:
        return len(self.a)

    def spacing(self, n: int) -> float:
        return self.L / self.q[n - 1]

    def positions(self, n: int, axis: int) -> np.ndarray:
        return self.offsets[n - 1][axis] + self.spacing(n) * np.arange(self.q[n - 1])

    def coverage(self, n: int) -> float:
        return (2 * self.a[n - 1] / self.spacing(n)) ** 2

    @classmethod
    def build(cls, a: Sequence[float], eps: Sequence[float], seed: int = 0,
              max_q: int = 10_000) -> 'LatticeTowers':
        """
        Smallest torus L = q_N p_N on which every level fits with coverage >= 1 - eps_n

        Raises:
            ConfigurationError: no commensurable spacing up to max_q
        """
        a, eps = tuple(float(v) for v in a), tuple(float(e) for e in eps)
        if len(a) != len(eps):
            raise ConfigurationError(f"{len(eps)} eps values for {len(a)} levels", path='eps')
        N = len(a)
        top = 2 * a[-1] / math.sqrt(1 - eps[-1])
        for q_top in range(2, max_q + 1):
            L = q_top * top
            qs = []
            for n in range(N - 1):
                q = int(math.ceil(L * math.sqrt(1 - eps[n]) / (2 * a[n]) - 1e-12))
                if q > L / (2 * a[n]) + 1e-12:
                    break
                qs.append(q)
            else:
                rng = make_rng(seed)
                q_all = tuple(qs) + (q_top,)
                offsets = tuple((float(rng.uniform(0, L / q)), float(rng.uniform(0, L / q))) for q in q_all)
                logger.info(f"Lattice towers: L = {L:.6g}, q = {q_all}")
                return cls(a, eps, L, q_all, offsets)
        raise ConfigurationError(f"no commensurable lattice spacing with q_N <= {max_q}", path='eps')


def _circular_offset(x: np.ndarray, X: np.ndarray, L: float) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest lattice point of X (sorted, evenly spaced) to each x on the circle, and the offset"""
    p = X[1] - X[0] if len(X) > 1 else L
    k = np.rint((x - X[0]) / p).astype(int) % len(X)
    d = (x - X[k] + L / 2) % L - L / 2
    return k, d


def _parent_axis(tw: LatticeTowers, j: int, axis: int) -> Tuple[np.ndarray, np.ndarray]:
    """For each level-j lattice coordinate: index of the level-(j+1) interval containing its a_j interval"""
    x = tw.positions(j, axis)
    X = tw.positions(j + 1, axis)
    k, d = _circular_offset(x, X, tw.L)
    inside = np.abs(d) <= tw.a[j] - tw.a[j - 1] + 1e-9 * tw.a[j]
    return k, inside


@dataclass
class RefinementReport:
    steps: List[Dict[str, Any]]
    finals: List[Dict[str, Any]]
    nested: CheckReport
    monotone: bool
    coverage_trend: List[float]
    tail_sum: float
    hypothesis_ok: bool
    region_checked: bool = False

    @property
    def passed(self) -> bool:
        return (all(s['passed'] for s in self.steps) and all(f['passed'] for f in self.finals)
                and self.nested.passed and self.monotone)

    def to_frame(self) -> pd.DataFrame:
        return create_report_frame(self.steps)

    def to_check_report(self) -> CheckReport:
        """Per-step entries with the final losses and trend in the summary"""
        summary = {'finals': self.finals, 'monotone': self.monotone, 'coverage_trend': self.coverage_trend,
                   'tail_sum': self.tail_sum, 'hypothesis_ok': self.hypothesis_ok,
                   'region_checked': self.region_checked,
                   'max_loss': max((s['loss'] for s in self.steps), default=0.0)}
        report = CheckReport.from_entries('refinement', self.steps, summary)
        report.passed = self.passed
        return report

    def to_dict(self) -> Dict[str, Any]:
        return {
            'passed': self.passed,
            'tail_sum': self.tail_sum,
            'hypothesis_ok': self.hypothesis_ok,
            'monotone': self.monotone,
            'coverage_trend': self.coverage_trend,
            'steps': self.steps,
            'finals': self.finals,
            'nested': self.nested.to_dict(),
            'region_checked': self.region_checked,
        }


def _step_bound(tw: LatticeTowers, m: int) -> float:
    """2 eps_m + 4 a_m / a_{m+1}, the ratio term vanishing at the top level"""
    ratio = tw.a[m - 1] / tw.a[m] if m < tw.N else 0.0
    return 2 * tw.eps[m - 1] + 4 * ratio


def _closed_form_bound(tw: LatticeTowers, j: int) -> float:
    return 2 * math.fsum(tw.eps[k - 1] + 2 * (tw.a[k - 1] / tw.a[k] if k < tw.N else 0.0)
                         for k in range(j, tw.N + 1))


def _nested_codes(tw: LatticeTowers, j: int, axis: int, keep: List[List[List[np.ndarray]]], k: int) -> np.ndarray:
    """Per-axis 5-bit codes: child in B_j(k), in B_j(k+1), has a parent, parent in B_{j+1}(k-1), in B_{j+1}(k)"""
    parent, inside = _parent_axis(tw, j, axis)
    in_k = keep[k][j - 1][axis]
    in_k1 = keep[k + 1][j - 1][axis]
    par_prev = keep[k - 1][j][axis][parent] & inside
    par_now = keep[k][j][axis][parent] & inside
    return (in_k.astype(int) | in_k1.astype(int) << 1 | inside.astype(int) << 2
            | par_prev.astype(int) << 3 | par_now.astype(int) << 4)


def _nested_violations(cx: np.ndarray, cy: np.ndarray) -> int:
    """Removed child squares not inside a removed parent square, counted over code pairs"""
    hx = np.bincount(cx, minlength=32)
    hy = np.bincount(cy, minlength=32)
    total = 0
    for a in np.nonzero(hx)[0]:
        for b in np.nonzero(hy)[0]:
            removed = (a & 1 and b & 1) and not (a & 2 and b & 2)
            if not removed:
                continue
            in_parent = (a & 4 and b & 4) and (a & 8 and b & 8) and not (a & 16 and b & 16)
            if not in_parent:
                total += int(hx[a]) * int(hy[b])
    return total


def _axis_intervals(centers: np.ndarray, half: float, L: float) -> List[Tuple[float, float]]:
    """Intervals on [0, L), split at the wrap"""
    out = []
    for c in centers:
        lo, hi = (c - half) % L, (c - half) % L + 2 * half
        if hi <= L:
            out.append((lo, hi))
        else:
            out.extend([(lo, L), (0.0, hi - L)])
    return out


def _removed_region(tw: LatticeTowers, n: int, before: List[np.ndarray], after: List[np.ndarray]) -> RectRegion:
    """Squares S_{a_n} x of lattice points retained in before but not in after"""
    half = tw.a[n - 1]
    removed = np.outer(before[0], before[1]) & ~np.outer(after[0], after[1])
    xs, ys = tw.positions(n, 0), tw.positions(n, 1)
    rects = []
    for ix, iy in zip(*np.nonzero(removed)):
        for x0, x1 in _axis_intervals(xs[ix:ix + 1], half, tw.L):
            for y0, y1 in _axis_intervals(ys[iy:iy + 1], half, tw.L):
                rects.append((x0, x1, y0, y1))
    return RectRegion(tuple(rects))


def refinement_steps(tw: LatticeTowers, max_workers: Optional[int] = None) -> List[List[List[np.ndarray]]]:
    """
    Per-axis retention keep[k][j-1][axis] for k = 0..max(N-1, 1)

    Level N stays fixed; within a step the levels are refined in parallel.
    """
    N = tw.N
    keep = [[[np.ones(tw.q[j], dtype=bool), np.ones(tw.q[j], dtype=bool)] for j in range(N)]]

    for _ in range(max(N - 1, 1)):
        current = keep[-1]

        def refine_level(j: int) -> List[np.ndarray]:
            if j == N:
                return [current[j - 1][0].copy(), current[j - 1][1].copy()]
            axes = []
            for axis in (0, 1):
                parent, inside = _parent_axis(tw, j, axis)
                axes.append(current[j - 1][axis] & inside & current[j][axis][parent])
            return axes

        keep.append(map_ordered(refine_level, range(1, N + 1), max_workers, label='refinement level'))
    return keep


def nested_refinement(model, eps_seq: Sequence[float], seed: int = 0,
                      towers: Optional[LatticeTowers] = None, region_check_limit: int = 400,
                      max_workers: Optional[int] = None) -> RefinementReport:
    """
    B_j(k+1) = B_j(k) intersected with S_{a_{j+1} - a_j} B_{j+1}(k), level N fixed

    Args:
        model: TowerModel or ASequence supplying a_1..a_N
        eps_seq: Base tower deficits eps_n
        seed: Seed of the lattice offsets
        towers: Prebuilt lattice towers (built from model and eps_seq otherwise)
        region_check_limit: Largest per-level square count for the RectRegion containment check
        max_workers: Worker cap for the per-level refinement

    Returns:
        RefinementReport with per-step losses, final losses and the nesting check
    """
    a_seq = model.a if isinstance(model, TowerModel) else model
    tw = towers or LatticeTowers.build(a_seq.values, eps_seq, seed)
    N = tw.N
    if not a_seq.hypothesis_ok:
        logger.warning("refinement runs without the sum a_n/a_(n+1) < 1/2 hypothesis")

    keep = refinement_steps(tw, max_workers)

    def mass(k: int, j: int) -> float:
        kx, ky = keep[k][j - 1]
        return float(kx.sum()) * float(ky.sum()) * 4 * tw.a[j - 1] ** 2 / tw.L ** 2

    steps = []
    for k in range(len(keep) - 1):
        for j in range(1, N + 1):
            before, after = mass(k, j), mass(k + 1, j)
            m = min(j + k, N)
            bound = _step_bound(tw, m)
            steps.append({'j': j, 'k': k, 'mass_before': before, 'mass_after': after,
                          'loss': before - after, 'bound': bound, 'passed': before - after <= bound + 1e-12})

    finals = []
    final_masses = []
    for j in range(1, N + 1):
        initial, final = mass(0, j), mass(len(keep) - 1, j)
        step_sum = math.fsum(s['bound'] for s in steps if s['j'] == j)
        closed = _closed_form_bound(tw, j)
        loss = initial - final
        finals.append({'j': j, 'initial_mass': initial, 'final_mass': final, 'final_loss': loss,
                       'deficit': 1 - final, 'step_sum_bound': step_sum, 'closed_form_bound': closed,
                       'passed': loss <= min(step_sum, closed) + 1e-12})
        final_masses.append(final)
    monotone = all(b >= a - 1e-12 for a, b in zip(final_masses, final_masses[1:]))

    nested_entries = []
    region_checked = False
    for k in range(1, len(keep) - 1):
        for j in range(1, N):
            cx = _nested_codes(tw, j, 0, keep, k)
            cy = _nested_codes(tw, j, 1, keep, k)
            violations = _nested_violations(cx, cy)
            entry = {'j': j, 'k': k, 'violations': violations, 'passed': violations == 0}
            if tw.q[j - 1] ** 2 <= region_check_limit:
                child = _removed_region(tw, j, keep[k][j - 1], keep[k + 1][j - 1])
                parent = _removed_region(tw, j + 1, keep[k - 1][j], keep[k][j])
                excess = child.difference_area(parent)
                entry['region_excess'] = excess
                entry['passed'] = entry['passed'] and excess <= 1e-9 * max(1.0, child.area())
                region_checked = True
            nested_entries.append(entry)
    nested = CheckReport.from_entries('nested_errors', nested_entries)

    report = RefinementReport(steps=steps, finals=finals, nested=nested, monotone=monotone,
                              coverage_trend=final_masses, tail_sum=a_seq.tail_sum,
                              hypothesis_ok=a_seq.hypothesis_ok, region_checked=region_checked)
    logger.info(f"Nested refinement over {N} levels: {'pass' if report.passed else 'FAIL'}")
    return report


def squares_met(center: complex, a: float, parents: Tuple[np.ndarray, np.ndarray], A: float,
                L: Optional[float] = None) -> List[Tuple[float, float]]:
    """
    Parent squares S_A(X) meeting S_a(center)

    Args:
        center: Center of the small square
        a: Its half edge
        parents: Parent center coordinates per axis (product lattice)
        A: Parent half edge
        L: Torus side, None for the plane

    Returns:
        Parent centers (X, Y) whose squares intersect the small square
    """
    def near(c: float, X: np.ndarray) -> np.ndarray:
        d = c - X
        if L is not None:
            d = (d + L / 2) % L - L / 2
        return X[np.abs(d) < a + A]

    xs, ys = near(center.real, parents[0]), near(center.imag, parents[1])
    return [(float(x), float(y)) for y in ys for x in xs]


def _corner_hits(corner: complex, parents: List[Tuple[float, float]], A: float, L: Optional[float]) -> int:
    hits = 0
    for X, Y in parents:
        dx, dy = corner.real - X, corner.imag - Y
        if L is not None:
            dx, dy = (dx + L / 2) % L - L / 2, (dy + L / 2) % L - L / 2
        if abs(dx) <= A * (1 + 1e-8) and abs(dy) <= A * (1 + 1e-8):
            hits += 1
    return hits


def four_corner_check(model, eps_seq: Sequence[float], samples: int = TOWER_DEFAULTS['placements'],
                      seed: int = 0, towers: Optional[LatticeTowers] = None) -> CheckReport:
    """
    Orbit squares S_{a_j} x, x drawn from B_j(k), against the level-(j+1) squares of B_{j+1}(k)

    Every square met holds a corner of S_{a_j} x and no corner lies in two of them, so at most
    four are met. When x survives into B_j(k+1) its square sits inside a single parent and each
    corner lies in exactly one level-(j+1) square.
    """
    a_seq = model.a if isinstance(model, TowerModel) else model
    tw = towers or LatticeTowers.build(a_seq.values, eps_seq, seed)
    N = tw.N
    if N == 1:
        return CheckReport.skip('four_corner', 'a single level has no parents')
    keep = refinement_steps(tw)
    rng = make_rng(seed + 1)
    entries = []
    worst = 0
    retained_samples = 0
    straddling = 0
    for s in range(samples):
        j = int(rng.integers(1, N))
        k = int(rng.integers(0, len(keep) - 1))
        kx, ky = (np.flatnonzero(m) for m in keep[k][j - 1])
        if not kx.size or not ky.size:
            continue
        ix, iy = int(rng.choice(kx)), int(rng.choice(ky))
        center = complex(tw.positions(j, 0)[ix], tw.positions(j, 1)[iy])
        retained = bool(keep[k + 1][j - 1][0][ix] and keep[k + 1][j - 1][1][iy])
        parents = (tw.positions(j + 1, 0)[keep[k][j][0]], tw.positions(j + 1, 1)[keep[k][j][1]])
        met = squares_met(center, tw.a[j - 1], parents, tw.a[j], tw.L)
        corners = [center + complex(sx, sy) * tw.a[j - 1] for sx in (-1, 1) for sy in (-1, 1)]
        corner_hits = [_corner_hits(c, met, tw.a[j], tw.L) for c in corners]
        parents_with_corner = sum(1 for p in met if any(_corner_hits(c, [p], tw.a[j], tw.L) for c in corners))
        worst = max(worst, len(met))
        straddling += len(met) > 1
        ok = len(met) <= 4 and all(h <= 1 for h in corner_hits) and parents_with_corner == len(met)
        if retained:
            retained_samples += 1
            ok = ok and len(met) == 1 and all(h == 1 for h in corner_hits)
        if not ok or s < 20:
            entries.append({'sample': s, 'level': j, 'step': k, 'retained': retained, 'met': len(met),
                            'corner_hits': corner_hits, 'passed': ok})
    summary = {'samples': samples, 'max_met': worst, 'retained_samples': retained_samples,
               'straddling': straddling}
    return CheckReport.from_entries('four_corner', entries, summary)


def refinement_defaults(N: int, eps: float) -> List[float]:
    return [float(eps)] * N


def tube_of_squares(centers: Iterable[complex], half_edge: float) -> RectRegion:
    """Union of S_half_edge(c) as a RectRegion"""
    return RectRegion(tuple(Square(c, half_edge).bounds for c in centers))
