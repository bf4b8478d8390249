"""
glue command - entire gluing of random polynomial patches
Weld, E1/E2 and the solver certificates, optionally the h/2 stability comparison
"""
import logging
import math
from typing import Optional

from artifact_manager import ArtifactManager
from eglue import AnalyticPatchSet, check_entire_glue, glue_entire, resolution_stability
from report_utils import CommandResult, build_run_report
from shglue import random_polynomial_fields
from solver_config import GRID_DEFAULTS, RunConfig
from utils import make_rng
from visualization import ChartGenerator
from windows import points_from_spec

logger = logging.getLogger(__name__)

# log sup of each patch as a fraction of the allowed 2^{1-B} M
PATCH_PEAK = 0.5


def run(cfg: RunConfig, manager: ArtifactManager, charts: Optional[ChartGenerator] = None) -> CommandResult:
    """
    Weld the patches and write the check report, f and the E1 table

    Args:
        cfg: Validated run configuration
        manager: Output side of the run
        charts: Chart generator when --plots is given

    Returns:
        CommandResult
    """
    p = cfg.resolved()
    C, B, M = float(p['C']), float(p['B']), float(p['M'])
    config = points_from_spec(p['points'], C, cfg.seed, p['extent'])
    log_sup = PATCH_PEAK * 2.0 ** (1.0 - B) * M
    fields = random_polynomial_fields(len(config), int(p['patch_degree']), GRID_DEFAULTS['patch_n'],
                                      log_sup, make_rng(cfg.seed + 1))
    ps = AnalyticPatchSet(config, dict(enumerate(fields)), M, B, float(p['holomorphy_factor']))

    hypotheses = ps.hypotheses()
    if not hypotheses.passed:
        logger.warning("weld hypotheses fail at the chosen parameters, nothing welded")
        reports = {'hypotheses': hypotheses}
        extra = {'points': [[z.real, z.imag] for z in config.points]}
        path = manager.write_json(build_run_report(manager.run_header(), p, reports, extra))
        return CommandResult('glue', reports, report_path=path,
                             stats={'points': len(config), 'C': C, 'B': B, 'M': M})

    result = glue_entire(ps, solver=cfg.solver, e1_eps=float(p['e1_eps']), max_workers=manager.max_workers)
    reports = check_entire_glue(result)
    if p['stability']:
        reports['resolution_stability'] = resolution_stability(ps, cfg.solver, grid=result.grid)

    extra = {
        'points': [[z.real, z.imag] for z in config.points],
        'solver': dict(cfg.solver.to_dict(), **result.solution.to_dict()),
        'tau': result.tau,
        'tau_target': result.tau_target,
        'log_tau_target': -M / 4.0,
        'grid': {'n': result.grid.n, 'h': result.grid.h},
    }
    path = manager.write_json(build_run_report(manager.run_header(), p, reports, extra))
    if reports['E1'].entries:
        manager.write_csv(reports['E1'].to_frame(), suffix='E1')
    manager.write_field(result.f, suffix='f')
    manager.write_heatmap(result.f, suffix='f')

    if charts:
        manager.write_figure(charts.create_field_heatmap(result.f, f"|f|, C = {C:g}, B = {B:g}", log_scale=True),
                             suffix='f')
        fig = charts.create_margin_chart(reports['E1'].entries, 'margin', 'E1 measure margins')
        if fig is not None:
            manager.write_figure(fig, suffix='E1')

    logger.info(f"Weld status {result.solution.status}, tau = {result.tau:.3e} "
                f"(exp(-M/4) = {math.exp(-M / 4.0):.3e})")
    return CommandResult('glue', reports, report_path=path,
                         stats={'points': len(config), 'C': C, 'B': B, 'M': M, 'grid_n': result.grid.n,
                                'status': result.solution.status})
