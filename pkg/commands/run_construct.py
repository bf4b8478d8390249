"""
construct command - the inductive sequence F_1..F_N over a generated tower model
"""
import logging
from typing import Optional

from artifact_manager import ArtifactManager
from construct import ADVISORY_CHECKS, run_pipeline
from report_utils import CommandResult, build_run_report
from solver_config import RunConfig, SolverConfig
from visualization import ChartGenerator

logger = logging.getLogger(__name__)


def run(cfg: RunConfig, manager: ArtifactManager, charts: Optional[ChartGenerator] = None) -> CommandResult:
    """
    Build F_1..F_N and write the property report with every B margin

    Args:
        cfg: Validated run configuration
        manager: Output side of the run
        charts: Chart generator when --plots is given

    Returns:
        CommandResult; property (A) and the direct nonconstancy measure are advisory
    """
    p = cfg.resolved()
    # an explicit solver block wins over the construct degree
    solver = cfg.solver if cfg.solver != SolverConfig() else None
    result = run_pipeline(p, seed=cfg.seed, solver=solver, max_workers=manager.max_workers)
    reports = result.reports
    seq = result.sequence

    extra = {
        'regime': result.params['regime'],
        'a': list(result.model.a.values),
        'deltas': {n: d.to_dict() for n, d in seq.deltas.items()},
        'good_mass': seq.good_mass,
        'partitions': {n: part.to_dict() for n, part in seq.partitions.items() if n >= 2},
    }
    path = manager.write_json(build_run_report(manager.run_header(), result.params, reports, extra,
                                               advisory=ADVISORY_CHECKS))
    manager.write_json(result.model.to_dict(), suffix='model')
    manager.write_csv(result.level_frame(), suffix='levels')
    for name in ('B3', 'B4_prime', 'B5'):
        if reports[name].entries:
            manager.write_csv(reports[name].to_frame(), suffix=name)

    top = seq.levels[seq.N]
    for lf in top:
        if lf.glue is not None:
            manager.write_heatmap(lf.glue.f, suffix=f"F{seq.N}-{lf.index}")
            if charts:
                manager.write_figure(charts.create_field_heatmap(
                    lf.glue.f, f"|F_{seq.N}^{lf.index}| in weld coordinates", log_scale=True),
                    suffix=f"F{seq.N}-{lf.index}")
    if charts:
        fig = charts.create_margin_chart(reports['B5'].entries, 'margin', 'B5 log-log margins', label_key='level')
        if fig is not None:
            manager.write_figure(fig, suffix='B5')

    return CommandResult('construct', reports, advisory=ADVISORY_CHECKS, report_path=path,
                         stats={'levels': seq.N, 'regime': result.params['regime'],
                                'classes': len(top), 'a_N': result.model.a[seq.N]})
