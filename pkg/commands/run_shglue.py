"""
shglue command - subharmonic gluing of log+|p| patches over a window system
"""
import logging
from typing import Optional

from artifact_manager import ArtifactManager
from report_utils import CommandResult, build_run_report
from shglue import (SubharmonicPatchSet, check_glue_result, glue_subharmonic, log_plus_modulus,
                    random_polynomial_fields)
from solver_config import GRID_DEFAULTS, RunConfig
from utils import make_rng
from visualization import ChartGenerator
from windows import points_from_spec

logger = logging.getLogger(__name__)

# patches peak at this fraction of M
PATCH_PEAK = 0.5


def run(cfg: RunConfig, manager: ArtifactManager, charts: Optional[ChartGenerator] = None) -> CommandResult:
    p = cfg.resolved()
    C, M = float(p['C']), float(p['M'])
    config = points_from_spec(p['points'], C, cfg.seed, p['extent'])
    fields = random_polynomial_fields(len(config), int(p['patch_degree']), GRID_DEFAULTS['patch_n'],
                                      PATCH_PEAK * M, make_rng(cfg.seed + 1))
    ps = SubharmonicPatchSet(config, {i: log_plus_modulus(f) for i, f in enumerate(fields)}, M)
    result = glue_subharmonic(ps, max_workers=manager.max_workers)
    reports = check_glue_result(result)

    extra = {
        'points': [[z.real, z.imag] for z in config.points],
        'margins': result.margins,
        'grid': {'n': result.grid.n, 'h': result.grid.h},
    }
    path = manager.write_json(build_run_report(manager.run_header(), p, reports, extra))
    for name in ('SH1', 'SH3'):
        if reports[name].entries:
            manager.write_csv(reports[name].to_frame(), suffix=name)
    manager.write_heatmap(result.log_u, suffix='log_u')

    if charts:
        manager.write_figure(charts.create_field_heatmap(result.log_u, f"log u, C = {C:g}, M = {M:g}"),
                             suffix='log_u')
        fig = charts.create_margin_chart(reports['SH3'].entries, 'margin', 'SH3 ring margins')
        if fig is not None:
            manager.write_figure(fig, suffix='SH3')

    return CommandResult('shglue', reports, report_path=path,
                         stats={'points': len(config), 'C': C, 'M': M, 'grid_n': result.grid.n})
