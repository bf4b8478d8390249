"""
Reusable terminal components for holoweld commands
Check tables, parameter grids and artifact lists rendered with rich
"""
import math
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from rich import box
from rich.console import Console
from rich.table import Table

from report_utils import CheckReport

console = Console(stderr=True)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return 'yes' if value else 'no'
    if isinstance(value, float):
        if not math.isfinite(value):
            return str(value)
        return f"{value:.6g}"
    if isinstance(value, complex):
        return f"{value.real:.4g}{value.imag:+.4g}i"
    return str(value)


def _status(report: CheckReport, advisory: bool) -> str:
    if report.skipped:
        return '[yellow]skipped[/yellow]'
    if report.passed:
        return '[green]pass[/green]'
    return '[yellow]advisory[/yellow]' if advisory else '[red]FAIL[/red]'


def render_check_table(reports: Dict[str, CheckReport], title: str, advisory: Iterable[str] = (),
                       out: Optional[Console] = None):
    """
    Render one row per check with its status and headline numbers

    Args:
        reports: Checks by name
        title: Table title
        advisory: Names whose failure does not fail the run
        out: Console (stderr by default)
    """
    advisory = set(advisory)
    table = Table(title=title, box=box.SIMPLE_HEAVY)
    table.add_column('check', style='cyan')
    table.add_column('status')
    table.add_column('items', justify='right')
    table.add_column('failed', justify='right')
    table.add_column('notes')

    for name, report in reports.items():
        summary = report.summary
        notes = ', '.join(f"{k}={_format_value(v)}" for k, v in summary.items()
                          if k not in ('items', 'failed') and not isinstance(v, (dict, list)))
        table.add_row(name, _status(report, name in advisory), str(summary.get('items', '')),
                      str(summary.get('failed', '')), notes[:120])
    (out or console).print(table)


def render_stats_grid(stats: Dict[str, Any], title: str, out: Optional[Console] = None):
    """Two-column key/value table"""
    table = Table(title=title, box=box.MINIMAL_DOUBLE_HEAD, show_header=False)
    table.add_column('key', style='cyan')
    table.add_column('value')
    for key, value in stats.items():
        table.add_row(str(key), _format_value(value))
    (out or console).print(table)


def render_artifacts(paths: Iterable[Path], out: Optional[Console] = None):
    paths = list(paths)
    if not paths:
        return
    (out or console).print(f"[bold]{len(paths)} artifacts[/bold]")
    for path in paths:
        (out or console).print(f"  {path}")


def render_error_message(error: Exception, context: str = "", out: Optional[Console] = None):
    """Error line with the schema path when the error carries one"""
    path = getattr(error, 'path', None)
    where = f" at {path}" if path else ""
    prefix = f"{context}: " if context else ""
    (out or console).print(f"[red]Error{where}:[/red] {prefix}{error}")
