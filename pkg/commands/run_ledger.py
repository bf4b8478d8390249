"""
ledger command - growth ledger in log space, written as the (m, ratio) CSV
"""
import logging
from typing import Optional

from artifact_manager import ArtifactManager
from construct import growth_ledger
from report_utils import CheckReport, CommandResult, build_run_report
from solver_config import RunConfig
from visualization import ChartGenerator

logger = logging.getLogger(__name__)

DECREASING_FROM = 1e3


def run(cfg: RunConfig, manager: ArtifactManager, charts: Optional[ChartGenerator] = None) -> CommandResult:
    p = cfg.resolved()
    ledger = growth_ledger(B=float(p['B']), D=float(p['D']), eps=float(p['eps']), mmax=float(p['mmax']),
                           grid=p['grid'], points_per_decade=int(p['points_per_decade']), chunk=int(p['chunk']))
    summary = ledger.summary()

    if summary['mmax'] > DECREASING_FROM:
        decreasing = CheckReport(name='tail_decreasing', passed=ledger.decreasing_from(DECREASING_FROM),
                                 summary={'from_m': DECREASING_FROM, 'final_ratio': summary['final_ratio']})
    else:
        decreasing = CheckReport.skip('tail_decreasing', f"mmax <= {DECREASING_FROM:g}")
    reports = {'tail_decreasing': decreasing}

    path = manager.write_json(build_run_report(manager.run_header(), p, reports, {'ledger': summary}))
    frame = ledger.to_frame()
    manager.write_csv(frame, suffix='ledger')
    manager.write_csv(frame[['m', 'ratio']], suffix='curve')

    if charts:
        manager.write_figure(charts.create_growth_curve(frame, float(p['eps'])), suffix='ledger')

    return CommandResult('ledger', reports, report_path=path,
                         stats={'rows': summary['rows'], 'mmax': summary['mmax'],
                                'final_ratio': summary['final_ratio']})
