"""
Report frames and check records
Pass/fail entries with margins, converted to pandas frames for CSV output
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from utils import to_builtin

logger = logging.getLogger(__name__)


@dataclass
class CheckReport:
    """Outcome of one property check: per-item entries plus a summary"""
    name: str
    passed: bool
    entries: List[Dict[str, Any]] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    skipped: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return to_builtin({
            'name': self.name,
            'passed': self.passed,
            'skipped': self.skipped,
            'summary': self.summary,
            'entries': self.entries,
        })

    def to_frame(self) -> pd.DataFrame:
        return create_report_frame(self.entries)

    @classmethod
    def from_entries(cls, name: str, entries: List[Dict[str, Any]],
                     summary: Optional[Dict[str, Any]] = None) -> 'CheckReport':
        """All entries must carry a 'passed' flag; an empty list passes vacuously"""
        passed = all(bool(e.get('passed', True)) for e in entries)
        summary = dict(summary or {})
        summary.setdefault('items', len(entries))
        summary.setdefault('failed', sum(1 for e in entries if not e.get('passed', True)))
        return cls(name=name, passed=passed, entries=entries, summary=summary)

    @classmethod
    def skip(cls, name: str, reason: str) -> 'CheckReport':
        return cls(name=name, passed=True, entries=[], summary={'reason': reason}, skipped=True)


def optimize_dataframe(df: pd.DataFrame) -> pd.DataFrame:
    """
    Downcast integer columns and turn repetitive labels into categories

    Float columns are left at float64 so written values are exact.

    Args:
        df: DataFrame to optimize

    Returns:
        The same DataFrame with narrower dtypes
    """
    if df.empty:
        return df
    start_mem = df.memory_usage(deep=True).sum() / 1024**2

    for col in df.select_dtypes(include=['int64']).columns:
        df[col] = pd.to_numeric(df[col], downcast='integer')

    for col in df.select_dtypes(include=['object']).columns:
        num_unique = df[col].nunique()
        num_total = len(df[col])
        if num_total and num_unique / num_total < 0.5:
            df[col] = df[col].astype('category')

    end_mem = df.memory_usage(deep=True).sum() / 1024**2
    logger.debug(f"DataFrame optimized: {start_mem:.3f}MB -> {end_mem:.3f}MB")
    return df


def _flatten(value: Any) -> Any:
    if isinstance(value, complex):
        return repr(value)
    if isinstance(value, (list, tuple, dict, np.ndarray)):
        return repr(to_builtin(value))
    return value


def create_report_frame(rows: List[Dict[str, Any]]) -> pd.DataFrame:
    """
    Create a report DataFrame from per-item entries

    Args:
        rows: List of dictionaries; nested values are stored as their repr

    Returns:
        DataFrame with a stable column order (first-seen)
    """
    if not rows:
        return pd.DataFrame()

    columns: List[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    df = pd.DataFrame([{k: _flatten(row.get(k)) for k in columns} for row in rows], columns=columns)
    return optimize_dataframe(df)


def combine_reports(reports: Dict[str, CheckReport]) -> Dict[str, Any]:
    """JSON-ready summary of several checks with an overall flag"""
    return {
        'passed': all(r.passed for r in reports.values()),
        'checks': {name: r.to_dict() for name, r in reports.items()},
    }


def build_run_report(header: Dict[str, Any], params: Dict[str, Any], reports: Dict[str, CheckReport],
                     extra: Optional[Dict[str, Any]] = None, advisory: tuple = ()) -> Dict[str, Any]:
    """
    JSON body of a command report

    Args:
        header: Provenance block (command, seed, generator)
        params: Resolved parameters
        reports: Checks by name
        extra: Command-specific data merged at top level
        advisory: Check names reported but left out of the overall flag

    Returns:
        Dict ready for ArtifactManager.write_json
    """
    gating = {k: r for k, r in reports.items() if k not in advisory}
    body = combine_reports(reports)
    body['passed'] = all(r.passed for r in gating.values())
    body['advisory'] = sorted(advisory)
    body.update(header)
    body['params'] = params
    if extra:
        body.update(extra)
    return to_builtin(body)


@dataclass
class CommandResult:
    """Checks of one command run and the JSON report written for them"""
    command: str
    reports: Dict[str, CheckReport]
    advisory: tuple = ()
    report_path: Optional[Any] = None
    stats: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for name, r in self.reports.items() if name not in self.advisory)
