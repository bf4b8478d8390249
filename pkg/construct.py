"""
Inductive construction of the level functions F_n over a tower model
F_1(z) = z, F_n^j welded from shifted F_{n-1} patches, property checks and the growth ledger
"""
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from artifact_manager import map_ordered
from eglue import AnalyticPatchSet, GlueResult, check_E1, check_holomorphy, default_weld_M, glue_entire
from errors import ConfigurationError, HypothesisError, PatchInputError
from fields import ComplexField, FieldInterpolator, Grid, RasterSet, Square, dilate, erode, sample
from report_utils import CheckReport, create_report_frame
from solver_config import CONSTRUCT_DEFAULTS, LEDGER_DEFAULTS, SolverConfig
from tower import (AnnulusComplement, DiscRegion, Partition, TowerModel, delta_fine_partition,
                   generate_tower_model, level_ratio, tube_measure)
from utils import log_of_log_sum
from windows import Configuration

logger = logging.getLogger(__name__)

NONCONSTANCY_FLOOR = 1.0 / 100.0
F1_FLOOR = 1.0 / 25.0
ADVISORY_CHECKS = ('property_A', 'nonconstancy_direct')


def f1(z):
    """F_1(T_z x) = z"""
    return np.asarray(z, dtype=complex) if np.ndim(z) else complex(z)


def closeness_target(n: int) -> float:
    return 10.0 ** (-2 * n)


def log_M_B(B: float, D: float, m: int) -> float:
    """log M_B(m) = B m + pi D^2 sum_{j=2}^{m-1} j^2 log^4 j"""
    total = math.fsum(j * j * math.log(j) ** 4 for j in range(2, m))
    return B * m + math.pi * D * D * total


def log_log_bound(log_x: float, extra: float = 0.0, factor: float = 1.0) -> float:
    """
    log log(factor e^x + extra) for x = e^{log_x}, without forming x when it overflows

    Args:
        log_x: log of the exponent x
        extra: Additive constant
        factor: Multiplier in front of e^x

    Returns:
        log of log(factor e^x + extra)
    """
    if log_x > 30:
        return log_of_log_sum(log_x, math.log(factor))
    x = math.exp(log_x)
    inner = float(np.logaddexp(math.log(factor) + x, math.log(extra))) if extra > 0 else math.log(factor) + x
    return math.log(inner) if inner > 0 else -math.inf


# Modulus of continuity

@dataclass(frozen=True)
class ModulusResult:
    delta: float
    threshold: float
    achieved: float
    below_floor: bool
    h: float

    def to_dict(self) -> Dict[str, Any]:
        return {'delta': self.delta, 'threshold': self.threshold, 'achieved': self.achieved,
                'below_floor': self.below_floor, 'h': self.h}


def _half_plane_offsets(k: int) -> List[Tuple[int, int]]:
    """Integer offsets (dx, dy) with k-1 < |o| <= k, one of each +-pair"""
    out = []
    for dy in range(0, k + 1):
        for dx in range(-k, k + 1):
            if dy == 0 and dx <= 0:
                continue
            r = math.hypot(dx, dy)
            if k - 1 < r <= k:
                out.append((dx, dy))
    return out


def _offset_max(values: np.ndarray, dx: int, dy: int) -> float:
    ny, nx = values.shape
    if abs(dx) >= nx or dy >= ny:
        return 0.0
    a = values[dy:, max(dx, 0):nx + min(dx, 0)]
    b = values[:ny - dy, max(-dx, 0):nx - max(dx, 0)]
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def modulus_delta(fields: Sequence[ComplexField], n: int, threshold: Optional[float] = None) -> ModulusResult:
    """
    Largest delta = k h in (0, 1] with sampled |F(z) - F(w)| < threshold whenever |z - w| <= delta

    Args:
        fields: Sampled F_{n-1}^j on a common grid over S_a^{+1}
        n: Level being built; threshold defaults to 10^{-2n} / 2
        threshold: Explicit target

    Returns:
        ModulusResult; below_floor marks a target finer than one grid step,
        with delta = h and the modulus at h as achieved threshold
    """
    threshold = closeness_target(n) / 2 if threshold is None else threshold
    if not fields:
        raise ValueError("modulus_delta needs at least one field")
    h = fields[0].grid.h
    for f in fields:
        if not np.isfinite(f.values).all():
            raise ValueError("modulus_delta needs finite fields")
    k_max = max(1, int(math.floor(1.0 / h + 1e-9)))
    running = 0.0
    for k in range(1, k_max + 1):
        for dx, dy in _half_plane_offsets(k):
            for f in fields:
                running = max(running, _offset_max(f.values, dx, dy))
        if running >= threshold:
            if k == 1:
                return ModulusResult(h, threshold, running, True, h)
            return ModulusResult((k - 1) * h, threshold, previous, False, h)
        previous = running
    return ModulusResult(min(1.0, k_max * h), threshold, running, False, h)


# Level functions

@dataclass(eq=False)
class LevelFunction:
    """F_n^j in absolute tower coordinates; w / scale is the weld variable"""
    level: int
    index: int
    scale: float
    glue: Optional[GlueResult] = None
    config: Optional[Configuration] = None
    patch_classes: List[int] = field(default_factory=list)
    jitter: List[complex] = field(default_factory=list)

    @cached_property
    def _interpolator(self) -> Optional[FieldInterpolator]:
        return FieldInterpolator(self.glue.f, order=3) if self.glue is not None else None

    def evaluate(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=complex)
        if self.glue is None:
            return f1(w)
        z = w / self.scale
        grid = self.glue.grid
        inside = grid.square.contains(z, tol=1e-9 * grid.h)
        values = np.empty(z.shape, dtype=complex)
        if inside.any():
            values[inside] = self._interpolator(z[inside])
        if (~inside).any():
            solution = self.glue.solution
            values[~inside] = solution.polynomial(z[~inside]) - solution.offset
        return values

    def sup_on(self, half_edge: float, n: int = 513) -> float:
        """max |F| over S_half_edge in absolute coordinates (boundary and weld nodes)"""
        t = np.linspace(-half_edge, half_edge, n)
        edge = np.concatenate([t - 1j * half_edge, t + 1j * half_edge, -half_edge + 1j * t, half_edge + 1j * t])
        peak = float(np.max(np.abs(self.evaluate(edge))))
        if self.glue is not None:
            nodes = self.glue.grid.Z * self.scale
            inside = Square(0j, half_edge).contains(nodes)
            if inside.any():
                peak = max(peak, float(np.max(np.abs(self.glue.f.values[inside]))))
        return peak


@dataclass(eq=False)
class FSequence:
    """Level functions per level and class, with the data each level was built from"""
    model: TowerModel
    B: float
    levels: Dict[int, List[LevelFunction]] = field(default_factory=dict)
    partitions: Dict[int, Partition] = field(default_factory=dict)
    deltas: Dict[int, ModulusResult] = field(default_factory=dict)
    class_mass: Dict[int, List[float]] = field(default_factory=dict)
    good_mass: Dict[int, float] = field(default_factory=dict)

    @property
    def N(self) -> int:
        return max(self.levels) if self.levels else 0

    @property
    def D(self) -> float:
        return self.model.D

    def a(self, n: int) -> float:
        return self.model.a[n] if n >= 1 else 0.0

    def cell_of(self, n: int) -> Dict[int, int]:
        return self.partitions[n].cell_of()

    def copy(self) -> 'FSequence':
        return FSequence(self.model, self.B, dict(self.levels), dict(self.partitions), dict(self.deltas),
                         dict(self.class_mass), dict(self.good_mass))


def first_level(model: TowerModel, B: float = CONSTRUCT_DEFAULTS['B']) -> FSequence:
    """F_1 = z on every level-1 class; classes of the model are the level-1 cells"""
    level = model.level(1)
    cells: Dict[int, List[int]] = {}
    for i, (cls, _) in enumerate(level.fibers()):
        cells.setdefault(cls, []).append(i)
    partition = Partition([cells[c] for c in sorted(cells)], math.inf, 0)
    seq = FSequence(model, B)
    seq.levels[1] = [LevelFunction(1, j, 1.0) for j in range(len(partition.cells))]
    seq.partitions[1] = partition
    seq.class_mass[1] = [level.classes[c].mass for c in sorted(cells)]
    return seq


@dataclass(frozen=True)
class RasterRegion:
    """Raster set in weld coordinates as a region of absolute area"""
    raster: RasterSet
    scale: float

    def area_within(self, square: Square) -> float:
        return self.raster.area().value * self.scale ** 2

    def exceeds(self, square: Square) -> bool:
        return False


def good_region(glue: GlueResult, radius: float) -> RasterSet:
    """Union over lambda of D_lambda eroded by radius (weld coordinates)"""
    grid = glue.grid
    mask = np.zeros(grid.shape, dtype=bool)
    for d_set in glue.subharmonic.d_sets.values():
        mask |= (erode(d_set, radius) if radius > 0 else d_set).mask
    return RasterSet(grid, mask)


def _patch_function(prev: LevelFunction, scale: float, jitter: complex) -> Callable:
    def patch(z):
        return prev.evaluate(scale * np.asarray(z, dtype=complex) + jitter)
    return patch


def build_next(model: TowerModel, prev: FSequence, B: Optional[float] = None, M: Optional[float] = None,
               solver: Optional[SolverConfig] = None, patch_n: int = CONSTRUCT_DEFAULTS['patch_n'],
               modulus_n: int = CONSTRUCT_DEFAULTS['modulus_n'],
               max_workers: Optional[int] = None) -> FSequence:
    """
    Weld level n = prev.N + 1

    Level-n fibers are grouped into a delta_n-fine partition, delta_n from the modulus
    of continuity of F_{n-1}; each cell's representative fiber supplies the configuration
    and jitter of one weld.

    Args:
        model: Tower model with at least prev.N + 1 levels
        prev: Sequence through level n - 1
        B: Weld parameter (prev.B by default)
        M: Weld M (smallest admissible value per class by default)
        solver: dbar solver settings
        patch_n: Samples per edge of each patch on S_1
        modulus_n: Samples per edge for the modulus of continuity
        max_workers: Worker cap for the per-class welds

    Returns:
        A new FSequence through level n

    Raises:
        HypothesisError, PatchInputError: with the level and class in the message
    """
    n = prev.N + 1
    if n > model.N:
        raise ConfigurationError(f"model has {model.N} levels, cannot build level {n}", path='levels')
    B = prev.B if B is None else B
    a_prev = model.a[n - 1]
    C = model.a[n] / a_prev
    level = model.level(n)
    prev_funcs = prev.levels[n - 1]
    prev_cell_of = prev.cell_of(n - 1)

    span = Square(0j, a_prev + 1.0)
    sampled = [sample(span, modulus_n, lf.evaluate, kind='complex') for lf in prev_funcs]
    modulus = modulus_delta(sampled, n)
    if modulus.below_floor:
        logger.warning(f"level {n}: modulus target {modulus.threshold:.1e} is below the grid step; "
                       f"delta = h = {modulus.delta:.3e}, achieved {modulus.achieved:.3e}")

    k_prev = len(prev.partitions[n - 1].cells)
    fibers = model.fiber_sets(n, prev_cell_of, k_prev)
    partition = delta_fine_partition(fibers, modulus.delta, k_prev, max_workers)
    level_fibers = level.fibers()

    def weld(cell: int) -> LevelFunction:
        rep = min(partition.cells[cell])
        template, fiber = level_fibers[rep]
        cls = level.classes[template]
        config = Configuration(tuple(cls.points), C)
        patch_classes = [prev_cell_of[t] for t in cls.targets]
        fns = [_patch_function(prev_funcs[c], a_prev, jit)
               for c, jit in zip(patch_classes, fiber.jitter or [0j] * len(cls.points))]
        try:
            unit = AnalyticPatchSet.from_functions(config, fns, 1.0, B, n=patch_n)
            weld_M = M if M is not None else default_weld_M(C, B, list(unit.log_sups().values()))
            ps = AnalyticPatchSet(config, unit.patches, weld_M, B)
            glue = glue_entire(ps, solver=solver)
        except (HypothesisError, PatchInputError) as e:
            raise type(e)(f"level {n} class {cell}: {e}") from e
        return LevelFunction(n, cell, a_prev, glue, config, patch_classes, list(fiber.jitter))

    funcs = map_ordered(weld, range(len(partition.cells)), max_workers, label=f'level {n} class')

    weights = [fb.weight for _, fb in level_fibers]
    masses = [math.fsum(weights[i] for i in cell) for cell in partition.cells]
    square = Square(0j, model.a[n])
    radius = model.a[n - 2] / a_prev if n >= 3 else 0.0
    good = math.fsum(tube_measure(RasterRegion(good_region(lf.glue, radius), a_prev), square, mass)
                     for lf, mass in zip(funcs, masses))

    seq = prev.copy()
    seq.levels[n] = funcs
    seq.partitions[n] = partition
    seq.deltas[n] = modulus
    seq.class_mass[n] = masses
    seq.good_mass[n] = good
    logger.info(f"Built level {n}: {len(funcs)} classes at C = {C:g}, delta = {modulus.delta:.3e}")
    return seq


# Property checks

def f1_facts(model: TowerModel) -> CheckReport:
    """mu(|F_1| <= 1/4) and mu(|F_1| >= 3/4) against 1/25"""
    mass = model.level(1).mass
    s1 = Square(0j, model.a[1])
    small = tube_measure(DiscRegion(0j, 0.25), s1, mass)
    large = tube_measure(AnnulusComplement(0j, 0.75), s1, mass)
    entries = [
        {'set': '|F_1| <= 1/4', 'measure': small, 'exact': math.pi / 4 ** 3 * mass, 'passed': small >= F1_FLOOR},
        {'set': '|F_1| >= 3/4', 'measure': large, 'passed': large >= F1_FLOOR},
    ]
    return CheckReport.from_entries('f1_facts', entries, {'tower_mass': mass, 'floor': F1_FLOOR})


def _core_comparison(seq: FSequence, n: int, lf: LevelFunction, box: Optional[float]) -> Tuple[float, str]:
    """max |F_n^j - F_{n-1}| over the E1 cores, restricted to |z - lambda| <= box when that is nonempty"""
    glue = lf.glue
    grid = glue.grid
    C = lf.config.C
    prev = seq.levels[n - 1]
    worst, region = 0.0, 'box' if box is not None else 'core'
    for i, lam in enumerate(lf.config.points):
        core = erode(glue.subharmonic.d_sets[i], 1.0 / (4 * C)).mask
        if box is not None:
            in_box = core & Square(lam, box).contains(grid.Z)
            if in_box.any():
                core = in_box
            else:
                region = 'core'
        if not core.any():
            continue
        z = grid.Z[core]
        jit = lf.jitter[i] if lf.jitter else 0j
        reference = prev[lf.patch_classes[i]].evaluate(lf.scale * (z - lam) + jit)
        worst = max(worst, float(np.max(np.abs(glue.f.values[core] - reference))))
    return worst, region


def eta(seq: FSequence, n: int, lf: LevelFunction) -> float:
    """Measured threshold max(10^{-2n}, 10 x solver fit residual)"""
    return max(closeness_target(n), 10.0 * lf.glue.fit_residual)


def check_B1(seq: FSequence) -> CheckReport:
    """Good cores thickened by a_{n-2}/a_{n-1} stay inside the level-(n-1) squares S_1(lambda)"""
    entries = []
    for n in range(2, seq.N + 1):
        radius = seq.a(n - 2) / seq.a(n - 1)
        for lf in seq.levels[n]:
            grid = lf.glue.grid
            for i, lam in enumerate(lf.config.points):
                d_set = lf.glue.subharmonic.d_sets[i]
                core = erode(d_set, radius) if radius > 0 else d_set
                window = RasterSet.from_square(grid, lf.config.window(i))
                contained = dilate(core, radius).is_subset(window) if radius > 0 else core.is_subset(window)
                entries.append({'level': n, 'class': lf.index, 'point': lam, 'core_nodes': core.count,
                                'passed': contained})
    return CheckReport.from_entries('B1', entries)


def check_B2(seq: FSequence) -> CheckReport:
    entries = []
    for n in range(2, seq.N + 1):
        for lf in seq.levels[n]:
            report = check_holomorphy(lf.glue)
            entries.append(dict(report.summary, level=n, **{'class': lf.index}, passed=report.passed))
    return CheckReport.from_entries('B2', entries)


def check_B3(seq: FSequence) -> CheckReport:
    """|F_n - F_{n-1}| on S_{a_{n-2}} below eta_n; needs n >= 3"""
    if seq.N < 3:
        return CheckReport.skip('B3', 'needs at least three levels')
    entries = []
    for n in range(3, seq.N + 1):
        box = seq.a(n - 2) / seq.a(n - 1)
        for lf in seq.levels[n]:
            diff, region = _core_comparison(seq, n, lf, box)
            threshold = eta(seq, n, lf)
            entries.append({'level': n, 'class': lf.index, 'max_diff': diff, 'region': region,
                            'eta': threshold, 'closeness_target': closeness_target(n),
                            'passed': diff < threshold})
    return CheckReport.from_entries('B3', entries)


def _log_log_sup(lf: LevelFunction, half_edge: float) -> Tuple[float, float]:
    sup = lf.sup_on(half_edge)
    log_sup = math.log(sup) if sup > 0 else -math.inf
    return log_sup, (math.log(log_sup) if log_sup > 0 else -math.inf)


def check_B4_B5(seq: FSequence) -> Dict[str, CheckReport]:
    """
    B4': log max_{S_{a_n}} |F_n| <= log(2 exp(2^{1-B} M_B(n+1)) + sum_{j<=n} 10^{-2j})
    B5:  log max_{S_{a_n}} |F_n^j| <= 2^{1-B} M_B(n)
    Both compared in log-log space.
    """
    B, D = seq.B, seq.D
    b4, b5 = [], []
    for n in range(1, seq.N + 1):
        extra = math.fsum(closeness_target(j) for j in range(1, n + 1))
        log_x_next = (1 - B) * math.log(2.0) + log_M_B(B, D, n + 1)
        log_x = (1 - B) * math.log(2.0) + log_M_B(B, D, n)
        bound4 = log_log_bound(log_x_next, extra, factor=2.0)
        for lf in seq.levels[n]:
            log_sup, ll_sup = _log_log_sup(lf, seq.a(n))
            b4.append({'level': n, 'class': lf.index, 'log_sup': log_sup, 'loglog_sup': ll_sup,
                       'loglog_bound': bound4, 'margin': bound4 - ll_sup, 'passed': ll_sup <= bound4})
            b5.append({'level': n, 'class': lf.index, 'log_sup': log_sup, 'loglog_sup': ll_sup,
                       'loglog_bound': log_x, 'margin': log_x - ll_sup, 'passed': ll_sup <= log_x})
    return {'B4_prime': CheckReport.from_entries('B4_prime', b4, {'B': B, 'D': D}),
            'B5': CheckReport.from_entries('B5', b5, {'B': B, 'D': D})}


def check_telescoping(seq: FSequence) -> CheckReport:
    """sup_k |F_{k+1} - F_k| over the weld cores; partial sums stay below the summed thresholds"""
    entries = []
    partial, budget = 0.0, 0.0
    for n in range(2, seq.N + 1):
        diffs = [_core_comparison(seq, n, lf, None)[0] for lf in seq.levels[n]]
        thresholds = [eta(seq, n, lf) for lf in seq.levels[n]]
        step = max(diffs) if diffs else 0.0
        partial += step
        budget += max(thresholds) if thresholds else 0.0
        entries.append({'level': n, 'sup_diff': step, 'eta': max(thresholds, default=0.0),
                        'partial_sum': partial, 'threshold_sum': budget, 'passed': partial <= budget})
    return CheckReport.from_entries('telescoping', entries)


def loss_term(D: float, n: int) -> float:
    """(1/D) / (n log^2 n)"""
    return 1.0 / level_ratio(D, n)


def check_property_A(seq: FSequence) -> CheckReport:
    """mu(X_n minus G_n) - mu(X_n minus X_{n-1}) against (1/D)/(n log^2 n)"""
    entries = []
    for n in range(2, seq.N + 1):
        x_n = seq.model.level(n).mass
        x_prev = seq.model.level(n - 1).mass
        excess = (x_n - seq.good_mass[n]) - (x_n - x_prev)
        bound = loss_term(seq.D, n)
        entries.append({'level': n, 'good_mass': seq.good_mass[n], 'excess': excess, 'bound': bound,
                        'passed': excess <= bound})
    return CheckReport.from_entries('property_A', entries)


def nonconstancy_chain(model: TowerModel, n: int) -> Dict[str, float]:
    """mu(|F_n| <= 1/3) >= mu(|F_1| <= 1/4) - 2 mu(X minus X_1) - sum_k (1/D)/(k log^2 k)"""
    m1 = model.level(1).mass
    small = tube_measure(DiscRegion(0j, 0.25), Square(0j, model.a[1]), m1)
    losses = math.fsum(loss_term(model.D, k) for k in range(2, n + 1))
    return {'mu_F1_small': small, 'outside_X1': 1.0 - m1, 'loss_sum': losses,
            'lower_bound': small - 2 * (1.0 - m1) - losses}


def nonconstancy_direct(seq: FSequence, n: int, samples: int = 257) -> float:
    """Model measure of |F_n| <= 1/3: class masses times sampled area fractions"""
    half = seq.a(n)
    total = 0.0
    for lf, mass in zip(seq.levels[n], seq.class_mass[n]):
        grid = Grid(Square(0j, half), samples)
        frac = float(np.mean(np.abs(lf.evaluate(grid.Z)) <= 1.0 / 3.0))
        total += mass * frac
    return total


def check_nonconstancy(seq: FSequence) -> Dict[str, CheckReport]:
    n = seq.N
    chain = nonconstancy_chain(seq.model, n)
    chain_report = CheckReport(name='nonconstancy', passed=chain['lower_bound'] >= NONCONSTANCY_FLOOR,
                               summary=dict(chain, level=n, floor=NONCONSTANCY_FLOOR,
                                            loss_sum_below_1_50=chain['loss_sum'] < 1.0 / 50.0))
    direct = nonconstancy_direct(seq, n)
    direct_report = CheckReport(name='nonconstancy_direct', passed=direct >= NONCONSTANCY_FLOOR,
                                summary={'level': n, 'measure': direct, 'floor': NONCONSTANCY_FLOOR})
    return {'nonconstancy': chain_report, 'nonconstancy_direct': direct_report}


def check_weld_E1(seq: FSequence) -> CheckReport:
    entries = []
    for n in range(2, seq.N + 1):
        for lf in seq.levels[n]:
            report = check_E1(lf.glue)
            worst = max((e['sup_diff_core'] for e in report.entries), default=0.0)
            entries.append({'level': n, 'class': lf.index, 'sup_diff_core': worst, 'passed': report.passed})
    return CheckReport.from_entries('E1', entries)


def check_properties(seq: FSequence, model: Optional[TowerModel] = None) -> Dict[str, CheckReport]:
    """
    Every property of the built sequence

    Returns:
        Reports keyed by property; ADVISORY_CHECKS are reported but do not
        decide the outcome at desk scale
    """
    if model is not None and model is not seq.model:
        raise ValueError("sequence was built over a different model")
    reports = {'f1_facts': f1_facts(seq.model)}
    if seq.N >= 2:
        reports['B1'] = check_B1(seq)
        reports['B2'] = check_B2(seq)
        reports['E1'] = check_weld_E1(seq)
    reports['B3'] = check_B3(seq)
    reports.update(check_B4_B5(seq))
    if seq.N >= 2:
        reports['telescoping'] = check_telescoping(seq)
        reports['property_A'] = check_property_A(seq)
    reports.update(check_nonconstancy(seq))
    return reports


def required_passed(reports: Dict[str, CheckReport]) -> bool:
    return all(r.passed for name, r in reports.items() if name not in ADVISORY_CHECKS)


# Growth ledger

def ledger_grid(mmax: int, grid: str = 'geometric', points_per_decade: int = 20) -> np.ndarray:
    """m values from 2 to mmax, geometric or evenly spaced"""
    mmax = int(mmax)
    if mmax < 3:
        raise ConfigurationError(f"mmax must be >= 3, got {mmax}", path='ledger.mmax')
    decades = max(1.0, math.log10(mmax / 2.0))
    count = max(2, int(math.ceil(decades * points_per_decade)) + 1)
    if grid == 'geometric':
        values = np.geomspace(2, mmax, count)
    elif grid == 'linear':
        values = np.linspace(2, mmax, min(count, mmax - 1))
    else:
        raise ConfigurationError(f"grid must be 'geometric' or 'linear', got {grid!r}", path='ledger.grid')
    m = np.unique(np.concatenate([np.rint(values).astype(np.int64), [2, 3, mmax]]))
    return m[(m >= 2) & (m <= mmax)]


def _prefix_sums(queries: np.ndarray, D: float, top: int, chunk: int) -> Dict[str, Dict[int, float]]:
    """
    Prefix sums up to each query index q (terms j = 2..q) of
    log(D j ln^2 j), j^2 ln^4 j and (D j ln^2 j)^2, accumulated chunk by chunk
    """
    wanted = np.unique(queries)
    out = {'log_a': {}, 'S': {}, 'R2': {}}
    for q in wanted[wanted < 2]:
        for key in out:
            out[key][int(q)] = 0.0
    totals = {'log_a': [], 'S': [], 'R2': []}
    log_D = math.log(D)
    for lo in range(2, top + 1, chunk):
        hi = min(lo + chunk, top + 1)
        j = np.arange(lo, hi, dtype=np.float64)
        lnj = np.log(j)
        terms = {
            'log_a': log_D + lnj + 2.0 * np.log(lnj),
            'S': j * j * lnj ** 4,
            'R2': (D * j * lnj * lnj) ** 2,
        }
        inside = wanted[(wanted >= lo) & (wanted < hi)]
        for key, t in terms.items():
            base = math.fsum(totals[key])
            if inside.size:
                cum = np.cumsum(t)
                for q in inside:
                    out[key][int(q)] = base + float(cum[int(q) - lo])
            totals[key].append(float(np.sum(t)))
    return out


@dataclass(eq=False)
class GrowthLedger:
    """
    Per m: log a_m, log M_B(m), logmax(m) = log(log 2 + 2^{1-B} M_B(m+1)) as a (sign, log) pair,
    and ratio(m, eps) in bound form (log 2 + (1-B) log 2 + log M_B(m+1)) / log^{3+eps} a_m
    """
    B: float
    D: float
    eps: float
    frame: pd.DataFrame

    def to_frame(self) -> pd.DataFrame:
        return self.frame

    def column(self, name: str) -> np.ndarray:
        return self.frame[name].to_numpy()

    def decreasing_from(self, m0: float, column: str = 'ratio') -> bool:
        tail = self.frame[self.frame['m'] >= m0][column].to_numpy()
        return bool(np.all(np.diff(tail) < 0))

    def spread(self, column: str, lo: float, hi: float) -> float:
        """max / min of a column over lo <= m <= hi"""
        values = self.frame[(self.frame['m'] >= lo) & (self.frame['m'] <= hi)][column].to_numpy()
        return float(values.max() / values.min())

    def summary(self) -> Dict[str, Any]:
        m = self.column('m')
        last_decade = (m[-1] / 10.0, m[-1])
        return {
            'B': self.B, 'D': self.D, 'eps': self.eps, 'mmax': int(m[-1]), 'rows': len(m),
            'log_M_B_2': float(self.frame.loc[self.frame['m'] == 2, 'log_M_B'].iloc[0]),
            'decreasing_from_1e3': self.decreasing_from(1e3),
            'final_ratio': float(self.column('ratio')[-1]),
            'normalized_spread_last_decade': self.spread('normalized', *last_decade),
            'asymptotic_spread_last_decade': self.spread('asymptotic_ratio', *last_decade),
            'max_cross_check_rel': float(np.max(self.column('cross_check_rel'))),
        }


def growth_ledger(B: float = LEDGER_DEFAULTS['B'], D: float = LEDGER_DEFAULTS['D'],
                  eps: float = LEDGER_DEFAULTS['eps'], mmax: float = LEDGER_DEFAULTS['mmax'],
                  grid: str = LEDGER_DEFAULTS['grid'], points_per_decade: int = LEDGER_DEFAULTS['points_per_decade'],
                  chunk: int = LEDGER_DEFAULTS['chunk']) -> GrowthLedger:
    """
    Log-space ledger of the growth bound up to mmax

    Args:
        B, D: Construction constants
        eps: Exponent slack in log^{3+eps}
        mmax: Last m (>= 3)
        grid: 'geometric' or 'linear'
        points_per_decade: Grid density
        chunk: Terms per accumulation chunk

    Returns:
        GrowthLedger
    """
    if not D > 0:
        raise ConfigurationError(f"D must be positive, got {D}", path='ledger.D')
    if not eps > 0:
        raise ConfigurationError(f"eps must be positive, got {eps}", path='ledger.eps')
    m = ledger_grid(int(mmax), grid, points_per_decade)
    top = int(m[-1]) + 1
    sums = _prefix_sums(np.concatenate([m - 1, m, m + 1]), D, top, int(chunk))

    rows = []
    log2 = math.log(2.0)
    for mi in m:
        mi = int(mi)
        log_a = sums['log_a'][mi]
        log_a_next = sums['log_a'][mi + 1]
        S = sums['S'][mi - 1]
        S_next = sums['S'][mi]
        log_MB = B * mi + math.pi * D * D * S
        log_MB_next = B * (mi + 1) + math.pi * D * D * S_next
        log_x = (1 - B) * log2 + log_MB_next
        denom = log_a ** (3 + eps)
        ratio = (log2 + log_x) / denom
        log_logmax = log_of_log_sum(log_x, log2)
        asymptotic = (math.pi * D * D * mi ** 3 * math.log(mi) ** 4 / 3.0) / denom
        section_form = math.pi * sums['R2'][mi - 1]
        rows.append({
            'm': mi,
            'log_a': log_a,
            'log_M_B': log_MB,
            'log_M_B_next': log_MB_next,
            'logmax_sign': 1,
            'logmax_log': log_logmax,
            'ratio': ratio,
            'ratio_exact': log_logmax / denom,
            'interpolation_factor': (log_a_next / log_a) ** (3 + eps / 2),
            'normalized': ratio * mi ** eps * math.log(mi) ** (eps - 1),
            'asymptotic_ratio': ratio / asymptotic,
            'cross_check_rel': abs(section_form - math.pi * D * D * S) / (math.pi * D * D * S) if S > 0 else 0.0,
        })
    frame = create_report_frame(rows)
    logger.info(f"Growth ledger: {len(rows)} rows up to m = {int(m[-1])}")
    return GrowthLedger(B, D, eps, frame)


# Pipeline

@dataclass(eq=False)
class PipelineResult:
    model: TowerModel
    sequence: FSequence
    reports: Dict[str, CheckReport]
    params: Dict[str, Any]

    @property
    def passed(self) -> bool:
        return required_passed(self.reports)

    def level_frame(self) -> pd.DataFrame:
        rows = []
        for n in sorted(self.sequence.levels):
            delta = self.sequence.deltas.get(n)
            for lf, mass in zip(self.sequence.levels[n], self.sequence.class_mass[n]):
                row = {'level': n, 'class': lf.index, 'mass': mass, 'scale': lf.scale,
                       'delta': delta.delta if delta else None}
                if lf.glue is not None:
                    row.update({'M': lf.glue.patch_set.M, 'tau': lf.glue.tau,
                                'fit_residual': lf.glue.fit_residual, 'grid_n': lf.glue.grid.n})
                rows.append(row)
        return create_report_frame(rows)


def run_pipeline(params: Optional[Dict[str, Any]] = None, seed: int = 0,
                 solver: Optional[SolverConfig] = None, max_workers: Optional[int] = None) -> PipelineResult:
    """
    Generate a tower model and build F_1..F_N over it

    Args:
        params: Construct parameters merged over CONSTRUCT_DEFAULTS
        seed: Model seed
        solver: dbar solver settings (degree from params when omitted)
        max_workers: Worker cap

    Returns:
        PipelineResult with the property reports
    """
    p = dict(CONSTRUCT_DEFAULTS)
    p.update(params or {})
    ratio = p['ratio_override'] if p['desk'] else None
    if ratio is None:
        logger.warning("full-regime ratios D n log^2 n make weld grids grow like a_n^2")
    model = generate_tower_model(D=p['D'], levels=int(p['levels']), classes=int(p['classes']),
                                 fibers_per_class=int(p['fibers_per_class']),
                                 points_per_class=int(p['points_per_class']), seed=seed,
                                 jitter=p['jitter'], ratio_override=ratio, base_mass=p['base_mass'])
    solver = solver or SolverConfig(degree=int(p['degree']))
    seq = first_level(model, p['B'])
    while seq.N < model.N:
        seq = build_next(model, seq, B=p['B'], M=p['M'], solver=solver, patch_n=int(p['patch_n']),
                         modulus_n=int(p['modulus_n']), max_workers=max_workers)
    reports = check_properties(seq, model)
    p['regime'] = 'desk' if p['desk'] else 'full'
    return PipelineResult(model, seq, reports, p)
