"""
towers command - tower model, top-level partition and net, nested refinement and the four-corner check
"""
import logging
from typing import Optional

import numpy as np

from artifact_manager import ArtifactManager
from report_utils import CommandResult, build_run_report, create_report_frame
from solver_config import RunConfig
from tower import (LatticeTowers, a_sequence, delta_fine_partition, epsilon_net, four_corner_check,
                   generate_tower_model, grid_cover, nested_refinement, refinement_defaults)
from visualization import ChartGenerator

logger = logging.getLogger(__name__)


def _fiber_offsets(model, n: int):
    """Per fiber of level n: its offsets from the class template, the sets the net is taken over"""
    sets = []
    for c in model.level(n).classes:
        for fb in c.fibers:
            jit = np.asarray(fb.jitter, dtype=complex)
            sets.append(jit if jit.size else np.zeros(1, dtype=complex))
    return sets


def run(cfg: RunConfig, manager: ArtifactManager, charts: Optional[ChartGenerator] = None) -> CommandResult:
    """
    Generate a tower model and run every tower check on it

    Args:
        cfg: Validated run configuration
        manager: Output side of the run
        charts: Chart generator when --plots is given

    Returns:
        CommandResult
    """
    p = cfg.resolved()
    D, N, eps = float(p['D']), int(p['levels']), float(p['eps'])
    a = a_sequence(D, N)
    eps_seq = refinement_defaults(N, eps)
    model = generate_tower_model(D=D, levels=N, classes=int(p['classes']),
                                 fibers_per_class=int(p['fibers_per_class']),
                                 points_per_class=int(p['points_per_class']), seed=cfg.seed)

    fibers = model.fiber_sets(N)
    partition = delta_fine_partition(fibers, float(p['delta']), model.level(N - 1).k, manager.max_workers)

    offsets = _fiber_offsets(model, N)
    stacked = np.concatenate(offsets)
    pad = float(p['delta'])
    bounds = (stacked.real.min() - pad, stacked.real.max() + pad,
              stacked.imag.min() - pad, stacked.imag.max() + pad)
    net = epsilon_net(offsets, float(p['delta']), grid_cover(bounds, float(p['delta'])))

    towers = LatticeTowers.build(a.values, eps_seq, cfg.seed)
    refinement = nested_refinement(a, eps_seq, cfg.seed, towers=towers, max_workers=manager.max_workers)

    reports = {
        'tower_model': model.validate(),
        'partition': partition.verify(fibers),
        'epsilon_net': net.verify(offsets),
        'refinement': refinement.to_check_report(),
        'nested_errors': refinement.nested,
        'four_corner': four_corner_check(a, eps_seq, int(p['placements']), cfg.seed, towers=towers),
    }

    extra = {
        'a': list(a.values),
        'tail_sum': a.tail_sum,
        'lattice': {'L': towers.L, 'q': list(towers.q), 'coverage': [towers.coverage(n) for n in range(1, N + 1)]},
        'partition_cells': partition.to_dict(),
        'net_size': len(net.groups),
    }
    path = manager.write_json(build_run_report(manager.run_header(), p, reports, extra))
    manager.write_json(model.to_dict(), suffix='model')
    steps = refinement.to_frame()
    manager.write_csv(steps, suffix='refinement')
    manager.write_csv(create_report_frame(refinement.finals), suffix='finals')

    if charts:
        manager.write_figure(charts.create_refinement_chart(steps), suffix='refinement')

    return CommandResult('towers', reports, report_path=path,
                         stats={'levels': N, 'a_N': a[N], 'L': towers.L,
                                'max_loss': reports['refinement'].summary['max_loss']})
