"""
windows command - window system of a point configuration with the P1-P3 checks
"""
import logging
from typing import Optional

from artifact_manager import ArtifactManager
from report_utils import CommandResult, build_run_report
from solver_config import RunConfig
from visualization import ChartGenerator
from windows import (build_window_system, check_P1, check_P2, check_P3, check_subharmonic,
                     points_from_spec)

logger = logging.getLogger(__name__)


def run(cfg: RunConfig, manager: ArtifactManager, charts: Optional[ChartGenerator] = None) -> CommandResult:
    """
    Build the window system and write its report

    Args:
        cfg: Validated run configuration
        manager: Output side of the run
        charts: Chart generator when --plots is given

    Returns:
        CommandResult with P1, P2, P3 and the subharmonicity check
    """
    p = cfg.resolved()
    C = float(p['C'])
    config = points_from_spec(p['points'], C, cfg.seed, p['extent'])
    ws = manager.get_or_compute('window_system',
                                lambda: build_window_system(config, max_workers=manager.max_workers))

    reports = {
        'P1': check_P1(ws),
        'P2': check_P2(ws),
        'P3': check_P3(ws, p['tol_factor']),
        'subharmonic': check_subharmonic(ws, p['subharmonic_radius_nodes'], p['tol_factor']),
    }

    extra = {
        'points': [[z.real, z.imag] for z in config.points],
        'grid': {'n': ws.grid.n, 'h': ws.grid.h, 'half_edge': ws.grid.square.half_edge,
                 'center': [ws.grid.square.center.real, ws.grid.square.center.imag]},
        'zero_set_nodes': {i: d.count for i, d in ws.d_sets.items()},
    }
    path = manager.write_json(build_run_report(manager.run_header(), p, reports, extra))
    if reports['P1'].entries:
        manager.write_csv(reports['P1'].to_frame(), suffix='P1')
    manager.write_heatmap(ws.log_v, suffix='log_v')
    if len(config):
        zero_sets = ws.d_sets[0]
        for index in range(1, len(config)):
            zero_sets = zero_sets.union(ws.d_sets[index])
        manager.write_raster(zero_sets, suffix='zero_sets')

    if charts:
        manager.write_figure(charts.create_field_heatmap(ws.log_v, f"log v, C = {C:g}"), suffix='log_v')
        fig = charts.create_margin_chart(reports['P1'].entries, 'margin', 'P1 area margins')
        if fig is not None:
            manager.write_figure(fig, suffix='P1')

    return CommandResult('windows', reports, report_path=path,
                         stats={'points': len(config), 'C': C, 'grid_n': ws.grid.n})
