"""
holoweld command-line interface
One subcommand per construction; exit 0 pass, 1 configuration error, 2 failed check, 3 solver or internal error
"""
import logging
import sys
from pathlib import Path
from typing import Annotated, Any, Dict, Optional

import click
import typer
from rich.logging import RichHandler

from artifact_manager import ArtifactManager
from commands import COMMANDS
from components import render_artifacts, render_check_table, render_error_message, render_stats_grid
from errors import (ConfigurationError, DbarSolverError, GeometryError, HypothesisError, PatchInputError,
                    ResolutionError)
from report_utils import CheckReport, build_run_report
from solver_config import build_run_config, load_config_file
from visualization import ChartGenerator

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_CHECK = 2
EXIT_INTERNAL = 3

# Parameter choices under which a construction does not apply; reported as failed checks
HYPOTHESIS_ERRORS = (HypothesisError, PatchInputError, GeometryError)

app = typer.Typer(
    name='holoweld',
    help='Windows, subharmonic and entire gluing, tower simulation, inductive construction and growth ledger.',
    add_completion=False,
    no_args_is_help=True,
)

Seed = Annotated[Optional[int], typer.Option('--seed', help='Seed of the PCG64 generator')]
Out = Annotated[Optional[Path], typer.Option('--out', help='Output directory (HOLOWELD_OUTPUT_DIR by default)')]
ConfigFile = Annotated[Optional[Path], typer.Option('--config', help='JSON config merged under the flags')]
Timestamp = Annotated[Optional[str], typer.Option('--timestamp', help='Fixed timestamp for output names')]
Threads = Annotated[Optional[int], typer.Option('--threads', min=1, help='Worker cap (HOLOWELD_THREADS by default)')]
Plots = Annotated[bool, typer.Option('--plots', help='Also write plotly HTML figures')]
Verbose = Annotated[bool, typer.Option('--verbose', '-v', help='Debug logging')]


def setup_logging(verbose: bool = False):
    """Configure the root logger once with a rich handler"""
    root = logging.getLogger()
    level = logging.DEBUG if verbose else logging.INFO
    if not any(isinstance(h, RichHandler) for h in root.handlers):
        root.addHandler(RichHandler(rich_tracebacks=False, show_path=False, markup=False))
    root.setLevel(level)


def _write_hypothesis_report(manager: ArtifactManager, params: Dict[str, Any], error: Exception):
    entry = {'hypothesis': type(error).__name__, 'message': str(error), 'passed': False}
    reports = {'hypotheses': CheckReport.from_entries('hypotheses', [entry])}
    manager.write_json(build_run_report(manager.run_header(), params, reports))


def _execute(command: str, params: Dict[str, Any], seed: Optional[int], out: Optional[Path],
             config: Optional[Path], timestamp: Optional[str], threads: Optional[int],
             plots: bool, verbose: bool):
    setup_logging(verbose)
    cfg = manager = None
    try:
        file_data = load_config_file(config) if config else None
        overrides = dict(params, seed=seed, out=out, timestamp=timestamp)
        cfg = build_run_config(command, file_data, overrides)
        manager = ArtifactManager(cfg.out_dir, command, cfg.seed, cfg.timestamp, max_workers=threads)
        charts = ChartGenerator() if plots else None
        result = COMMANDS[command].run(cfg, manager, charts)
    except (ConfigurationError, ResolutionError) as e:
        render_error_message(e, command)
        raise typer.Exit(code=EXIT_CONFIG)
    except HYPOTHESIS_ERRORS as e:
        render_error_message(e, f"{command} hypothesis")
        if manager is not None:
            _write_hypothesis_report(manager, cfg.resolved(), e)
            render_artifacts(manager.written)
        raise typer.Exit(code=EXIT_CHECK)
    except DbarSolverError as e:
        render_error_message(e, f"{command} solver")
        raise typer.Exit(code=EXIT_INTERNAL)
    except Exception as e:
        logger.exception(f"{command} failed")
        render_error_message(e, command)
        raise typer.Exit(code=EXIT_INTERNAL)

    render_stats_grid(result.stats, f"{command} (seed {cfg.seed})")
    render_check_table(result.reports, f"{command} checks", advisory=result.advisory)
    render_artifacts(manager.written)
    if not result.passed:
        failed = [name for name, r in result.reports.items() if not r.passed and name not in result.advisory]
        logger.warning(f"{command}: failed checks {', '.join(failed)}")
        raise typer.Exit(code=EXIT_CHECK)


@app.command()
def windows(
    C: Annotated[Optional[float], typer.Option('--C', help='Window constant')] = None,
    points: Annotated[Optional[str], typer.Option('--points', help='random:N | grid:K | file:path.json')] = None,
    extent: Annotated[Optional[float], typer.Option('--extent', help='Sampling half edge for random points')] = None,
    tol_factor: Annotated[Optional[float], typer.Option('--tol-factor', help='Raster tolerance factor')] = None,
    seed: Seed = None, out: Out = None, config: ConfigFile = None, timestamp: Timestamp = None,
    threads: Threads = None, plots: Plots = False, verbose: Verbose = False,
):
    """Window system of a configuration with the P1-P3 checks."""
    _execute('windows', {'C': C, 'points': points, 'extent': extent, 'tol_factor': tol_factor},
             seed, out, config, timestamp, threads, plots, verbose)


@app.command()
def shglue(
    C: Annotated[Optional[float], typer.Option('--C', help='Window constant (> 7)')] = None,
    M: Annotated[Optional[float], typer.Option('--M', help='Patch bound')] = None,
    points: Annotated[Optional[str], typer.Option('--points', help='random:N | grid:K | file:path.json')] = None,
    extent: Annotated[Optional[float], typer.Option('--extent')] = None,
    patch_degree: Annotated[Optional[int], typer.Option('--patch-degree')] = None,
    seed: Seed = None, out: Out = None, config: ConfigFile = None, timestamp: Timestamp = None,
    threads: Threads = None, plots: Plots = False, verbose: Verbose = False,
):
    """Subharmonic gluing of log+|p| patches with the SH1-SH3 checks."""
    _execute('shglue', {'C': C, 'M': M, 'points': points, 'extent': extent, 'patch_degree': patch_degree},
             seed, out, config, timestamp, threads, plots, verbose)


@app.command()
def glue(
    C: Annotated[Optional[float], typer.Option('--C', help='Window constant')] = None,
    B: Annotated[Optional[float], typer.Option('--B', help='Patch exponent')] = None,
    M: Annotated[Optional[float], typer.Option('--M', help='Weld parameter (> 40 log C)')] = None,
    points: Annotated[Optional[str], typer.Option('--points', help='random:N | grid:K | file:path.json')] = None,
    extent: Annotated[Optional[float], typer.Option('--extent')] = None,
    patch_degree: Annotated[Optional[int], typer.Option('--patch-degree')] = None,
    e1_eps: Annotated[Optional[float], typer.Option('--e1-eps', help='Erosion radius of the E1 check')] = None,
    stability: Annotated[Optional[bool], typer.Option('--stability/--no-stability',
                                                      help='Also weld at h/2')] = None,
    seed: Seed = None, out: Out = None, config: ConfigFile = None, timestamp: Timestamp = None,
    threads: Threads = None, plots: Plots = False, verbose: Verbose = False,
):
    """Entire gluing with the E1/E2 checks and the d-bar certificates."""
    _execute('glue', {'C': C, 'B': B, 'M': M, 'points': points, 'extent': extent,
                      'patch_degree': patch_degree, 'e1_eps': e1_eps, 'stability': stability},
             seed, out, config, timestamp, threads, plots, verbose)


@app.command()
def towers(
    levels: Annotated[Optional[int], typer.Option('--levels', help='Number of levels N')] = None,
    D: Annotated[Optional[float], typer.Option('--D', help='Growth constant')] = None,
    eps: Annotated[Optional[float], typer.Option('--eps', help='Base tower deficit per level')] = None,
    placements: Annotated[Optional[int], typer.Option('--placements', help='Four-corner samples')] = None,
    delta: Annotated[Optional[float], typer.Option('--delta', help='Partition fineness')] = None,
    seed: Seed = None, out: Out = None, config: ConfigFile = None, timestamp: Timestamp = None,
    threads: Threads = None, plots: Plots = False, verbose: Verbose = False,
):
    """Tower model, partition, nested refinement and the four-corner check."""
    _execute('towers', {'levels': levels, 'D': D, 'eps': eps, 'placements': placements, 'delta': delta},
             seed, out, config, timestamp, threads, plots, verbose)


@app.command()
def construct(
    levels: Annotated[Optional[int], typer.Option('--levels', help='Number of levels N')] = None,
    desk: Annotated[Optional[bool], typer.Option('--desk/--full', help='Constant weld ratio or D n log^2 n')] = None,
    D: Annotated[Optional[float], typer.Option('--D')] = None,
    B: Annotated[Optional[float], typer.Option('--B')] = None,
    ratio_override: Annotated[Optional[float], typer.Option('--ratio', help='Desk weld ratio')] = None,
    degree: Annotated[Optional[int], typer.Option('--degree', help='Weld polynomial degree')] = None,
    seed: Seed = None, out: Out = None, config: ConfigFile = None, timestamp: Timestamp = None,
    threads: Threads = None, plots: Plots = False, verbose: Verbose = False,
):
    """Inductive construction F_1..F_N with the B1-B5 property report."""
    _execute('construct', {'levels': levels, 'desk': desk, 'D': D, 'B': B, 'ratio_override': ratio_override,
                           'degree': degree},
             seed, out, config, timestamp, threads, plots, verbose)


@app.command()
def ledger(
    B: Annotated[Optional[float], typer.Option('--B')] = None,
    D: Annotated[Optional[float], typer.Option('--D')] = None,
    eps: Annotated[Optional[float], typer.Option('--eps', help='Exponent slack in log^(3+eps)')] = None,
    mmax: Annotated[Optional[float], typer.Option('--mmax', help='Last m')] = None,
    grid: Annotated[Optional[str], typer.Option('--grid', help='geometric | linear')] = None,
    points_per_decade: Annotated[Optional[int], typer.Option('--points-per-decade')] = None,
    seed: Seed = None, out: Out = None, config: ConfigFile = None, timestamp: Timestamp = None,
    threads: Threads = None, plots: Plots = False, verbose: Verbose = False,
):
    """Growth ledger of the construction in log space."""
    _execute('ledger', {'B': B, 'D': D, 'eps': eps, 'mmax': mmax, 'grid': grid,
                        'points_per_decade': points_per_decade},
             seed, out, config, timestamp, threads, plots, verbose)


def main():
    """Console entry point; usage errors exit with the configuration code"""
    try:
        code = app(standalone_mode=False)
    except click.UsageError as e:
        e.show()
        sys.exit(EXIT_CONFIG)
    except click.Abort:
        sys.exit(EXIT_INTERNAL)
    sys.exit(code or EXIT_OK)


if __name__ == '__main__':
    main()
